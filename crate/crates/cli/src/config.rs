//! Run settings: defaults, then a preset, then a TOML file, then flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::Args;
use platoon_core::ModelParams;
use serde::{Deserialize, Serialize};

/// Flags shared by every command. List-valued flags take comma-separated
/// values and define a grid.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Parameter preset: fig4a, fig4b, fig4c, fig5a, fig5b or fig5c.
    #[arg(long)]
    pub preset: Option<String>,
    /// TOML file with the same keys as the flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Station capacity.
    #[arg(long = "L", value_delimiter = ',')]
    pub capacity: Option<Vec<usize>>,
    /// Deadline in slots.
    #[arg(long = "T", value_delimiter = ',')]
    pub deadline: Option<Vec<u32>>,
    /// Arrival probability per slot.
    #[arg(long, value_delimiter = ',')]
    pub p: Option<Vec<f64>>,
    /// Expiration penalty.
    #[arg(long, value_delimiter = ',')]
    pub cex: Option<Vec<f64>>,
    /// Waiting cost per truck and slot.
    #[arg(long, value_delimiter = ',')]
    pub omega: Option<Vec<f64>>,
    /// Platoon cost scale.
    #[arg(long, value_delimiter = ',')]
    pub gamma: Option<Vec<f64>>,
    #[arg(long)]
    pub replications: Option<usize>,
    #[arg(long)]
    pub slots: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Largest state space the solver will build.
    #[arg(long)]
    pub budget: Option<u64>,
}

/// Scalar or list in a config file.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T> OneOrMany<T> {
    fn into_vec(self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v],
            OneOrMany::Many(v) => v,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    preset: Option<String>,
    #[serde(rename = "L")]
    capacity: Option<OneOrMany<usize>>,
    #[serde(rename = "T")]
    deadline: Option<OneOrMany<u32>>,
    p: Option<OneOrMany<f64>>,
    cex: Option<OneOrMany<f64>>,
    omega: Option<OneOrMany<f64>>,
    gamma: Option<OneOrMany<f64>>,
    replications: Option<usize>,
    slots: Option<u64>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    budget: Option<u64>,
}

/// Fully resolved settings; embedded in every output header.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Settings {
    pub preset: Option<String>,
    #[serde(rename = "L")]
    pub capacity: Vec<usize>,
    #[serde(rename = "T")]
    pub deadline: Vec<u32>,
    pub p: Vec<f64>,
    pub cex: Vec<f64>,
    pub omega: Vec<f64>,
    pub gamma: Vec<f64>,
    pub replications: usize,
    pub slots: u64,
    pub seed: u64,
    pub out: PathBuf,
    pub budget: u64,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            preset: None,
            capacity: vec![3],
            deadline: vec![10],
            p: vec![0.1],
            cex: vec![15.0],
            omega: vec![1.0],
            gamma: vec![1.0],
            replications: 20,
            slots: 100_000,
            seed: 2026,
            out: PathBuf::from("out"),
            budget: 90_000,
        }
    }
}

/// Parameter sets of the published experiments, run at full scale.
pub fn preset(name: &str) -> anyhow::Result<Settings> {
    let base = Settings {
        preset: Some(name.to_string()),
        replications: 100,
        slots: 1_000_000,
        ..Settings::default()
    };
    let small = vec![2, 3, 5, 7, 10];
    let s = match name {
        "fig4a" => Settings { capacity: small, p: vec![0.1], cex: vec![15.0], ..base },
        "fig4b" => Settings { capacity: small, p: vec![0.2], cex: vec![7.0], ..base },
        "fig4c" => Settings { capacity: small, p: vec![0.6], cex: vec![30.0], ..base },
        "fig5a" => Settings {
            capacity: vec![2, 3, 5, 7],
            deadline: vec![20],
            p: vec![0.5],
            cex: vec![25.0],
            gamma: vec![0.8],
            ..base
        },
        "fig5b" => Settings {
            capacity: vec![2, 3, 5, 7],
            deadline: vec![20],
            p: vec![0.1],
            cex: vec![100.0],
            gamma: vec![0.9],
            ..base
        },
        "fig5c" => Settings {
            capacity: vec![20, 40, 60, 80, 100],
            deadline: vec![100],
            p: vec![0.3],
            cex: vec![100.0],
            omega: vec![1.5],
            gamma: vec![0.8],
            ..base
        },
        other => bail!("unknown preset {other:?}"),
    };
    Ok(s)
}

fn read_file(path: &Path) -> anyhow::Result<FileConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

impl Settings {
    pub fn resolve(args: &CommonArgs) -> anyhow::Result<Settings> {
        let file = match &args.config {
            Some(path) => read_file(path)?,
            None => FileConfig::default(),
        };
        let preset_name = args.preset.clone().or(file.preset.clone());
        let mut s = match &preset_name {
            Some(name) => preset(name)?,
            None => Settings::default(),
        };

        if let Some(v) = file.capacity {
            s.capacity = v.into_vec();
        }
        if let Some(v) = file.deadline {
            s.deadline = v.into_vec();
        }
        if let Some(v) = file.p {
            s.p = v.into_vec();
        }
        if let Some(v) = file.cex {
            s.cex = v.into_vec();
        }
        if let Some(v) = file.omega {
            s.omega = v.into_vec();
        }
        if let Some(v) = file.gamma {
            s.gamma = v.into_vec();
        }
        s.replications = file.replications.unwrap_or(s.replications);
        s.slots = file.slots.unwrap_or(s.slots);
        s.seed = file.seed.unwrap_or(s.seed);
        s.out = file.out.unwrap_or(s.out);
        s.budget = file.budget.unwrap_or(s.budget);

        if let Some(v) = &args.capacity {
            s.capacity = v.clone();
        }
        if let Some(v) = &args.deadline {
            s.deadline = v.clone();
        }
        if let Some(v) = &args.p {
            s.p = v.clone();
        }
        if let Some(v) = &args.cex {
            s.cex = v.clone();
        }
        if let Some(v) = &args.omega {
            s.omega = v.clone();
        }
        if let Some(v) = &args.gamma {
            s.gamma = v.clone();
        }
        s.replications = args.replications.unwrap_or(s.replications);
        s.slots = args.slots.unwrap_or(s.slots);
        s.seed = args.seed.unwrap_or(s.seed);
        s.out = args.out.clone().unwrap_or(s.out);
        s.budget = args.budget.unwrap_or(s.budget);

        for (name, len) in [
            ("L", s.capacity.len()),
            ("T", s.deadline.len()),
            ("p", s.p.len()),
            ("cex", s.cex.len()),
            ("omega", s.omega.len()),
            ("gamma", s.gamma.len()),
        ] {
            if len == 0 {
                bail!("{name} needs at least one value");
            }
        }
        Ok(s)
    }

    /// Every parameter combination, capacity varying slowest.
    pub fn instances(&self) -> anyhow::Result<Vec<ModelParams>> {
        let mut out = Vec::new();
        for &l in &self.capacity {
            for &t in &self.deadline {
                for &p in &self.p {
                    for &cex in &self.cex {
                        for &w in &self.omega {
                            for &g in &self.gamma {
                                out.push(ModelParams::new(l, t, p, cex, w, g)?);
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// The single instance for commands that take one.
    pub fn single(&self) -> anyhow::Result<ModelParams> {
        let all = self.instances()?;
        if all.len() != 1 {
            bail!("this command takes one instance, the settings describe {}", all.len());
        }
        Ok(all[0])
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("settings serialize")
    }
}
