//! Scenario files shipped with the library.

use crate::error::{Error, Result};

use super::Scenario;

#[derive(Debug, Clone, Copy)]
pub struct Preset {
    pub name: &'static str,
    pub description: &'static str,
    pub json: &'static str,
}

impl Preset {
    pub fn scenario(&self) -> Result<Scenario> {
        Scenario::from_json(self.json)
    }
}

pub const PRESETS: &[Preset] = &[
    Preset {
        name: "fig2a",
        description: "sum rate vs N_r, 4 classes of 8 single-antenna users, DAS",
        json: include_str!("../../presets/fig2a.json"),
    },
    Preset {
        name: "fig2a-cas",
        description: "sum rate vs N_r, 4 classes of 8 single-antenna users, CAS",
        json: include_str!("../../presets/fig2a-cas.json"),
    },
    Preset {
        name: "fig2b",
        description: "sum rate vs N_r, 16 single-user classes with 2 antennas, DAS",
        json: include_str!("../../presets/fig2b.json"),
    },
    Preset {
        name: "fig2b-cas",
        description: "sum rate vs N_r, 16 single-user classes with 2 antennas, CAS",
        json: include_str!("../../presets/fig2b-cas.json"),
    },
    Preset {
        name: "fig3a",
        description: "ZF/MMSE/SIC-MMSE rate bounds vs N_r, 3 classes of 10 users",
        json: include_str!("../../presets/fig3a.json"),
    },
    Preset {
        name: "fig3b",
        description: "ZF/MMSE/SIC-MMSE rate bounds vs N_r, 2 classes of 16 users",
        json: include_str!("../../presets/fig3b.json"),
    },
    Preset {
        name: "fig4",
        description: "rate bounds vs SNR, 8 users with 8 correlated antennas, N_r = 128",
        json: include_str!("../../presets/fig4.json"),
    },
    Preset {
        name: "fig5",
        description: "FLOPs vs number of classes, K = 100, N_r = 200",
        json: include_str!("../../presets/fig5.json"),
    },
    Preset {
        name: "fig6",
        description: "FLOPs vs number of users, 5 classes, N_r = 3 N_t",
        json: include_str!("../../presets/fig6.json"),
    },
    Preset {
        name: "fig7",
        description: "FLOPs vs antennas per user, 10 single-user classes, N_r = 2 N_t",
        json: include_str!("../../presets/fig7.json"),
    },
    Preset {
        name: "fig8",
        description: "BER vs SNR, K = 12, 3 classes, 3 antennas per user, N_r = 36",
        json: include_str!("../../presets/fig8.json"),
    },
    Preset {
        name: "fig9a",
        description: "BER vs SNR, K = 64, 4 classes, N_B = 34 with 6 heads of 7",
        json: include_str!("../../presets/fig9a.json"),
    },
    Preset {
        name: "fig9b",
        description: "BER vs SNR, K = 64, 4 classes, N_B = 34 with 8 heads of 7",
        json: include_str!("../../presets/fig9b.json"),
    },
];

pub fn find(name: &str) -> Option<&'static Preset> {
    PRESETS.iter().find(|p| p.name == name)
}

/// Parsed scenario of the preset called `name`.
pub fn load(name: &str) -> Result<Scenario> {
    find(name)
        .ok_or_else(|| Error::Validation(format!("unknown preset `{name}`")))?
        .scenario()
}
