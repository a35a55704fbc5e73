//! Example networks shipped with the crate.

#[derive(Debug, Clone, Copy)]
pub struct BundledNetwork {
    pub name: &'static str,
    pub text: &'static str,
}

macro_rules! bundled {
    ($($name:literal),* $(,)?) => {
        &[$(BundledNetwork {
            name: $name,
            text: include_str!(concat!("../networks/", $name, ".crn")),
        }),*]
    };
}

pub const ALL: &[BundledNetwork] = bundled!["reversible", "binding", "cycle3", "dimer", "stiff", "cascade", "mapk3"];

/// The network used for the projector comparison.
pub const STIFF: &str = "stiff";

pub fn by_name(name: &str) -> Option<&'static BundledNetwork> {
    ALL.iter().find(|n| n.name == name)
}
