use anyhow::{bail, Context};
use serde_json::json;

use forgelens::classifier::{evaluate, Checkpoint, EvalReport};

use crate::run_config::create_out_dir;
use crate::train_cmd::load_manifest;
use crate::{EvalArgs, RunConfig, REPORT_FILE};

pub(crate) fn print_report(r: &EvalReport) {
    let hits = r.confusion.tp + r.confusion.tn;
    println!("split: {:?}", r.split);
    println!("accuracy: {} ({hits}/{})", r.accuracy, r.total);
    for (kind, k) in &r.per_kind {
        println!("  {kind}: {} ({}/{})", k.accuracy, k.correct, k.count);
    }
    let c = &r.confusion;
    println!("confusion: tp {} fp {} tn {} fn {}", c.tp, c.fp, c.tn, c.fn_);
    println!("loss: {}", r.loss);
}

pub fn run<'a>(args: &EvalArgs, rc: impl FnOnce(serde_json::Value) -> RunConfig<'a>) -> anyhow::Result<()> {
    let ckpt = Checkpoint::load(&args.checkpoint)?;
    let arch = &ckpt.model.arch;
    if let Some(size) = args.input_size.filter(|&s| s != arch.input_size) {
        bail!("checkpoint expects {0}×{0} input, not {size}×{size}", arch.input_size);
    }
    let manifest = load_manifest(&args.manifest)?;
    create_out_dir(&args.out)?;
    rc(json!({ "arch": arch, "epoch": ckpt.epoch })).write(&args.out)?;
    let report = evaluate(&ckpt.model, &manifest, args.split)?;
    let path = args.out.join(REPORT_FILE);
    std::fs::write(&path, serde_json::to_string_pretty(&report)? + "\n").with_context(|| format!("writing {}", path.display()))?;
    print_report(&report);
    println!("report: {}", path.display());
    Ok(())
}
