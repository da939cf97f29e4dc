//! On-disk model bundle: `config.json`, `spec.json`, one weight file per
//! network and `trace.csv`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    Architecture, EpochStats, GeneratorNet, InferenceNet, TrainingTrace, VaeConfig, VaeModel,
};
use crate::error::{Error, Result};
use crate::nn::{load_network, save_network, Network, NetworkSpec, Shape};

pub const VAE_SCHEMA: &str = "lmface.vae/1";

const NETWORKS: [&str; 4] = ["generator", "encoder_trunk", "encoder_mu", "encoder_logvar"];

#[derive(Debug, Serialize, Deserialize)]
struct BundleConfig {
    schema: String,
    config: VaeConfig,
    architecture: Architecture,
    diverged: Option<String>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
struct SpecEntry {
    name: String,
    input_shape: Shape,
    spec: NetworkSpec,
}

fn networks(model: &VaeModel) -> [&Network<f32>; 4] {
    [
        &model.generator.net,
        &model.inference.trunk,
        &model.inference.mu,
        &model.inference.logvar,
    ]
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn save_bundle(model: &VaeModel, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_json(
        &dir.join("config.json"),
        &BundleConfig {
            schema: VAE_SCHEMA.into(),
            config: model.config.clone(),
            architecture: model.generator.arch,
            diverged: model.trace.diverged.clone(),
        },
    )?;
    let nets = networks(model);
    let specs: Vec<SpecEntry> = NETWORKS
        .iter()
        .zip(nets)
        .map(|(name, net)| SpecEntry {
            name: name.to_string(),
            input_shape: net.input_shape(),
            spec: net.spec().clone(),
        })
        .collect();
    write_json(&dir.join("spec.json"), &specs)?;
    for (name, net) in NETWORKS.iter().zip(nets) {
        save_network(net, &dir.join(format!("{name}.lmnn")))?;
    }
    write_trace_csv(&model.trace, &dir.join("trace.csv"))
}

pub fn load_bundle(dir: &Path) -> Result<VaeModel> {
    let cfg: BundleConfig = read_json(&dir.join("config.json"))?;
    if cfg.schema != VAE_SCHEMA {
        return Err(Error::Format(format!(
            "unknown model schema {:?}",
            cfg.schema
        )));
    }
    let specs: Vec<SpecEntry> = read_json(&dir.join("spec.json"))?;
    let mut nets = Vec::with_capacity(NETWORKS.len());
    for name in NETWORKS {
        let net: Network<f32> = load_network(&dir.join(format!("{name}.lmnn")))?;
        let listed = specs
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| Error::Format(format!("spec.json has no entry for {name}")))?;
        if listed.spec != *net.spec() || listed.input_shape != net.input_shape() {
            return Err(Error::Format(format!(
                "{name} weights disagree with spec.json"
            )));
        }
        nets.push(net);
    }
    let arch = cfg.architecture;
    let expect = [
        arch.generator_spec()?,
        arch.trunk_spec()?,
        arch.head_spec(),
        arch.head_spec(),
    ];
    if nets.iter().zip(&expect).any(|(n, s)| n.spec() != s) {
        return Err(Error::Format(
            "networks do not match the recorded architecture".into(),
        ));
    }
    let mut it = nets.into_iter();
    let generator = GeneratorNet::from_network(arch, it.next().unwrap())?;
    let inference = InferenceNet {
        arch,
        trunk: it.next().unwrap(),
        mu: it.next().unwrap(),
        logvar: it.next().unwrap(),
    };
    let mut trace = read_trace_csv(&dir.join("trace.csv"))?;
    trace.diverged = cfg.diverged;
    Ok(VaeModel {
        config: cfg.config,
        generator,
        inference,
        trace,
    })
}

/// Columns `epoch,recon,kl,total`.
pub fn write_trace_csv(trace: &TrainingTrace, path: &Path) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(f);
    w.write_record(["epoch", "recon", "kl", "total"])?;
    for e in &trace.epochs {
        w.write_record([
            e.epoch.to_string(),
            e.recon.to_string(),
            e.kl.to_string(),
            e.total.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_trace_csv(path: &Path) -> Result<TrainingTrace> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(f);
    let mut epochs = Vec::new();
    for row in r.records() {
        let row = row?;
        let field = |i: usize| -> Result<f64> {
            row.get(i)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Format(format!("bad trace row {row:?}")))
        };
        epochs.push(EpochStats {
            epoch: field(0)? as usize,
            recon: field(1)?,
            kl: field(2)?,
            total: field(3)?,
        });
    }
    Ok(TrainingTrace {
        epochs,
        diverged: None,
    })
}
