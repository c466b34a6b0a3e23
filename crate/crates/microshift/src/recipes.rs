//! Ready-to-run example configs, compiled into the binary.

use crate::error::{Error, Result};

#[derive(Debug)]
pub struct Recipe {
    pub name: &'static str,
    pub summary: &'static str,
    pub text: &'static str,
}

pub const RECIPES: &[Recipe] = &[
    Recipe {
        name: "transport-scan",
        summary: "heating and survival versus one-pitch sweep duration",
        text: include_str!("recipes/transport-scan.toml"),
    },
    Recipe {
        name: "register-shift",
        summary: "three-cycle pattern shift with occupancy images",
        text: include_str!("recipes/register-shift.toml"),
    },
    Recipe {
        name: "handover",
        summary: "single-handover retention in the asymmetric register",
        text: include_str!("recipes/handover.toml"),
    },
    Recipe {
        name: "echo-conveyor",
        summary: "spin-echo coherence, at rest and through a 2 ms transport",
        text: include_str!("recipes/echo-conveyor.toml"),
    },
    Recipe {
        name: "echo-register",
        summary: "spin-echo coherence through handovers and a full shift cycle",
        text: include_str!("recipes/echo-register.toml"),
    },
    Recipe {
        name: "ramsey-conveyor",
        summary: "Ramsey dephasing from the thermal spread of trap shifts",
        text: include_str!("recipes/ramsey-conveyor.toml"),
    },
    Recipe {
        name: "trap-lifetime",
        summary: "survival versus hold time under background-gas collisions",
        text: include_str!("recipes/trap-lifetime.toml"),
    },
];

pub fn find(name: &str) -> Result<&'static Recipe> {
    RECIPES.iter().find(|r| r.name == name).ok_or_else(|| {
        Error::Config(format!(
            "unknown recipe {name:?}; `list-recipes` shows what is bundled"
        ))
    })
}
