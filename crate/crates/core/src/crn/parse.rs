//! Line-oriented network files.
//!
//! ```text
//! # comment
//! species E S ES P
//! reaction 1e3 : E + S -> ES
//! reaction 2.0 : ES -> E + P
//! reaction 0.1 : 2 P ->
//! conc S 10
//! moiety 0 2.5
//! ```

use super::{CrnError, CrnNetwork, Reaction};

/// A parsed network together with its optional moiety totals and initial
/// concentrations.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub network: CrnNetwork,
    /// `(moiety row, total)` pairs from `moiety` lines.
    pub moieties: Vec<(usize, f64)>,
    /// `(species, concentration)` pairs from `conc` lines.
    pub concentrations: Vec<(usize, f64)>,
}

pub fn parse_network(text: &str) -> Result<CrnNetwork, CrnError> {
    parse_model(text).map(|m| m.network)
}

pub fn parse_model(text: &str) -> Result<ModelFile, CrnError> {
    let mut species: Vec<String> = Vec::new();
    let mut reactions: Vec<Reaction> = Vec::new();
    let mut moieties = Vec::new();
    // Resolved after all species are known.
    let mut conc_lines: Vec<(usize, String, f64)> = Vec::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (keyword, rest) = content.split_once(char::is_whitespace).unwrap_or((content, ""));
        let rest = rest.trim();
        match keyword {
            "species" => {
                if rest.is_empty() {
                    return Err(syntax(line, "species line names no species"));
                }
                for name in rest.split_whitespace() {
                    check_name(line, name)?;
                    intern(&mut species, name);
                }
            }
            "reaction" => reactions.push(parse_reaction(line, rest, &mut species)?),
            "moiety" => moieties.push(moiety_entry(line, rest)?),
            "conc" => {
                let (name, value) = conc_entry(line, rest)?;
                conc_lines.push((line, name, value));
            }
            other => return Err(syntax(line, &format!("unknown keyword '{other}'"))),
        }
    }

    let concentrations = resolve_species(&species, conc_lines)?;
    let network = CrnNetwork::new(species, reactions)?;
    Ok(ModelFile {
        network,
        moieties,
        concentrations,
    })
}

/// Moiety totals from a file of `moiety <index> <value>` lines; the
/// keyword may be omitted.
pub fn parse_moieties(text: &str) -> Result<Vec<(usize, f64)>, CrnError> {
    let mut out = Vec::new();
    for (line, content) in content_lines(text) {
        let rest = content.strip_prefix("moiety").map_or(content, str::trim);
        out.push(moiety_entry(line, rest)?);
    }
    Ok(out)
}

/// Initial concentrations from a file of `conc <species> <value>` lines;
/// the keyword may be omitted.
pub fn parse_state(text: &str, network: &CrnNetwork) -> Result<Vec<(usize, f64)>, CrnError> {
    let mut entries = Vec::new();
    for (line, content) in content_lines(text) {
        let rest = content.strip_prefix("conc ").map_or(content, str::trim);
        let (name, value) = conc_entry(line, rest)?;
        entries.push((line, name, value));
    }
    resolve_species(network.species(), entries)
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, raw)| (i + 1, raw.split('#').next().unwrap_or("").trim()))
        .filter(|(_, c)| !c.is_empty())
}

fn moiety_entry(line: usize, rest: &str) -> Result<(usize, f64), CrnError> {
    let mut parts = rest.split_whitespace();
    let (Some(idx), Some(val), None) = (parts.next(), parts.next(), parts.next()) else {
        return Err(syntax(line, "expected 'moiety <index> <value>'"));
    };
    let idx: usize = idx
        .parse()
        .map_err(|_| syntax(line, &format!("invalid moiety index '{idx}'")))?;
    Ok((idx, parse_number(line, val)?))
}

fn conc_entry(line: usize, rest: &str) -> Result<(String, f64), CrnError> {
    let mut parts = rest.split_whitespace();
    let (Some(name), Some(val), None) = (parts.next(), parts.next(), parts.next()) else {
        return Err(syntax(line, "expected 'conc <species> <value>'"));
    };
    Ok((name.to_string(), parse_number(line, val)?))
}

fn resolve_species(species: &[String], entries: Vec<(usize, String, f64)>) -> Result<Vec<(usize, f64)>, CrnError> {
    entries
        .into_iter()
        .map(|(line, name, value)| {
            let idx = species
                .iter()
                .position(|s| *s == name)
                .ok_or(CrnError::UnknownSpecies { line, name })?;
            Ok((idx, value))
        })
        .collect()
}

fn syntax(line: usize, message: &str) -> CrnError {
    CrnError::Syntax {
        line,
        message: message.to_string(),
    }
}

fn check_name(line: usize, name: &str) -> Result<(), CrnError> {
    if !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
        Ok(())
    } else {
        Err(syntax(line, &format!("invalid species name '{name}'")))
    }
}

fn intern(species: &mut Vec<String>, name: &str) -> usize {
    match species.iter().position(|s| s == name) {
        Some(i) => i,
        None => {
            species.push(name.to_string());
            species.len() - 1
        }
    }
}

fn parse_number(line: usize, token: &str) -> Result<f64, CrnError> {
    token
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| syntax(line, &format!("invalid number '{token}'")))
}

fn parse_reaction(line: usize, rest: &str, species: &mut Vec<String>) -> Result<Reaction, CrnError> {
    let (rate_str, equation) = rest
        .split_once(':')
        .ok_or_else(|| syntax(line, "expected 'reaction <rate> : <lhs> -> <rhs>'"))?;
    let rate = parse_number(line, rate_str.trim())?;
    if !(rate > 0.0) {
        return Err(CrnError::NonPositiveRate { line, rate });
    }
    let (lhs, rhs) = equation
        .split_once("->")
        .ok_or_else(|| syntax(line, "reaction is missing '->'"))?;
    let reactants = parse_side(line, lhs, species)?;
    let products = parse_side(line, rhs, species)?;
    let units: u32 = reactants.iter().map(|&(_, m)| m).sum();
    if units > 2 {
        return Err(CrnError::TooManyReactants { line, units });
    }
    Reaction::new(reactants, products, rate).map_err(|e| match e {
        CrnError::TooManyReactants { units, .. } => CrnError::TooManyReactants { line, units },
        CrnError::NonPositiveRate { rate, .. } => CrnError::NonPositiveRate { line, rate },
        other => other,
    })
}

fn parse_side(line: usize, side: &str, species: &mut Vec<String>) -> Result<Vec<(usize, u32)>, CrnError> {
    let side = side.trim();
    if side.is_empty() {
        return Ok(Vec::new());
    }
    side.split('+')
        .map(|term| {
            let tokens: Vec<&str> = term.split_whitespace().collect();
            let (mult, name) = match tokens.as_slice() {
                [name] => (1, *name),
                [coef, name] => {
                    let m: u32 = coef
                        .parse()
                        .map_err(|_| syntax(line, &format!("invalid coefficient '{coef}'")))?;
                    if m != 2 {
                        return Err(syntax(line, &format!("coefficient must be 2, got '{coef}'")));
                    }
                    (m, *name)
                }
                _ => return Err(syntax(line, &format!("malformed term '{}'", term.trim()))),
            };
            check_name(line, name)?;
            Ok((intern(species, name), mult))
        })
        .collect()
}
