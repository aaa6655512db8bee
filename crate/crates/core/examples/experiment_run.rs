//! Driving an experiment from code: layered config, a run directory and its
//! manifest of output digests.

use langford::config::ExperimentConfig;
use langford::experiments::{cmd_poincare, PoincareCmd};
use langford::manifest::{verify_digests, RunRecorder};
use langford::poincare::FIXED_POINT_SEED;

fn main() -> langford::Result<()> {
    let cfg = ExperimentConfig::load(None, &["section.tol=1e-12"])?;
    let dir = std::env::temp_dir().join("langford-fixed-point");
    let mut rec = RunRecorder::new(&dir, vec!["experiment_run".into()], cfg.to_text())?;
    let cmd = PoincareCmd::FixedPoint { alpha: 0.6, seed: FIXED_POINT_SEED };
    let negative = cmd_poincare(&cfg, &mut rec, &cmd)?;
    let manifest = rec.finish(negative)?;
    for o in &manifest.outputs {
        println!("{}  {}", o.sha256, o.path);
    }
    println!("{}", serde_json::to_string_pretty(&manifest.scalars).unwrap_or_default());
    println!("digest mismatches: {:?}", verify_digests(&dir)?);
    Ok(())
}
