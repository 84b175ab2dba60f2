use std::fmt;
use std::str::FromStr;

use crate::error::Error;

/// How a Hadamard matrix is assembled. Sylvester nodes carry the doubling exponent,
/// Paley nodes carry the prime `q`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Recipe {
    Sylvester(u32),
    Paley1(u64),
    Paley2(u64),
    Kron(Box<Recipe>, Box<Recipe>),
}

impl Recipe {
    pub fn kron(left: Recipe, right: Recipe) -> Recipe {
        Recipe::Kron(Box::new(left), Box::new(right))
    }

    /// Matrix order produced by this recipe, or `None` if it overflows `usize`.
    pub fn size(&self) -> Option<usize> {
        match self {
            Recipe::Sylvester(k) => 1usize.checked_shl(*k).filter(|_| *k < usize::BITS),
            Recipe::Paley1(q) => usize::try_from(*q).ok()?.checked_add(1),
            Recipe::Paley2(q) => usize::try_from(*q).ok()?.checked_add(1)?.checked_mul(2),
            Recipe::Kron(a, b) => a.size()?.checked_mul(b.size()?),
        }
    }

    /// Leaf nodes from left to right.
    pub fn leaves(&self) -> Vec<&Recipe> {
        match self {
            Recipe::Kron(a, b) => {
                let mut out = a.leaves();
                out.extend(b.leaves());
                out
            }
            leaf => vec![leaf],
        }
    }
}

impl fmt::Display for Recipe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Recipe::Sylvester(k) => write!(f, "(sylvester {k})"),
            Recipe::Paley1(q) => write!(f, "(paley1 {q})"),
            Recipe::Paley2(q) => write!(f, "(paley2 {q})"),
            Recipe::Kron(a, b) => write!(f, "(kron {a} {b})"),
        }
    }
}

impl FromStr for Recipe {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let spaced = s.replace('(', " ( ").replace(')', " ) ");
        let tokens: Vec<&str> = spaced.split_whitespace().collect();
        let mut pos = 0;
        let recipe = parse_node(&tokens, &mut pos)?;
        if pos != tokens.len() {
            return Err(bad_recipe(s));
        }
        Ok(recipe)
    }
}

fn bad_recipe(s: &str) -> Error {
    Error::InvalidArgument(format!("cannot parse recipe `{s}`"))
}

fn parse_node(tokens: &[&str], pos: &mut usize) -> Result<Recipe, Error> {
    let mut next = || -> Result<&str, Error> {
        let tok = tokens.get(*pos).copied().ok_or_else(|| bad_recipe(&tokens.join(" ")))?;
        *pos += 1;
        Ok(tok)
    };
    if next()? != "(" {
        return Err(bad_recipe(&tokens.join(" ")));
    }
    let head = next()?;
    let node = match head {
        "kron" => {
            let a = parse_node(tokens, pos)?;
            let b = parse_node(tokens, pos)?;
            Recipe::kron(a, b)
        }
        "sylvester" | "paley1" | "paley2" => {
            let arg = tokens.get(*pos).ok_or_else(|| bad_recipe(&tokens.join(" ")))?;
            *pos += 1;
            let value: u64 = arg.parse().map_err(|_| bad_recipe(arg))?;
            match head {
                "sylvester" => Recipe::Sylvester(u32::try_from(value).map_err(|_| bad_recipe(arg))?),
                "paley1" => Recipe::Paley1(value),
                _ => Recipe::Paley2(value),
            }
        }
        other => return Err(bad_recipe(other)),
    };
    match tokens.get(*pos) {
        Some(&")") => {
            *pos += 1;
            Ok(node)
        }
        _ => Err(bad_recipe(&tokens.join(" "))),
    }
}
