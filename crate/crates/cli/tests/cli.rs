mod common;

use common::*;
use svrec::metrics::{best_stack_baseline, EvalReport};
use svrec::recon::SliceStack;
use svrec::{Execution, Volume};

fn stacks_in(dir: &std::path::Path) -> Vec<SliceStack> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "stack"))
        .collect();
    paths.sort();
    paths.iter().map(|p| SliceStack::load(p).unwrap()).collect()
}

#[test]
fn pipeline_beats_the_upsampling_baseline() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL_CONFIG);
    let case = simulate(tmp.path(), &cfg, 2, 0.0, 1, "sim").join("case_000");
    let rec = tmp.path().join("rec");
    assert!(svrec(&["reconstruct", "--case", p(&case), "--config", p(&cfg), "--out", p(&rec)]).status.success());
    for f in ["volume.vol", "states.json", "trace.csv", "model.ckpt"] {
        assert!(rec.join(f).is_file(), "{f} missing");
    }
    let report = tmp.path().join("eval/report.json");
    let o = svrec(&[
        "evaluate",
        "--recon",
        p(&rec.join("volume.vol")),
        "--reference",
        p(&case.join("phantom.vol")),
        "--truth",
        p(&case.join("truth.json")),
        "--states",
        p(&rec.join("states.json")),
        "--out",
        p(&report),
    ]);
    assert!(o.status.success());
    let rep: EvalReport = serde_json::from_reader(std::fs::File::open(&report).unwrap()).unwrap();
    let truth = svrec::io::read_truth(
        std::fs::File::open(case.join("truth.json")).unwrap(),
        Volume::load(&case.join("phantom.vol")).unwrap(),
    )
    .unwrap();
    let (_, baseline) =
        best_stack_baseline(&stacks_in(&case), &truth.phantom.volume, Some(&truth.phantom.mask), Execution::Parallel).unwrap();
    println!("pipeline psnr {:.2} dB, best upsampled stack {baseline:.2} dB", rep.psnr);
    assert!(rep.psnr.is_finite() && rep.psnr >= baseline);
    assert!(rep.motion.is_some());
    let csv = std::fs::read_to_string(report.with_extension("csv")).unwrap();
    let rows: Vec<Vec<&str>> = csv.lines().map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][..7], ["method", "mu", "n_stacks", "psnr", "ssim", "ncc", "seconds"]);
    assert_eq!(rows[1][..3], ["svrec", "0", "3"]);
    assert!(rows[1][6].parse::<f64>().unwrap() > 0.0);
}

#[test]
fn self_evaluation_reports_the_sentinel() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL_CONFIG);
    let case = simulate(tmp.path(), &cfg, 5, 0.0, 1, "sim").join("case_000");
    let phantom = case.join("phantom.vol");
    let out = tmp.path().join("self.json");
    assert!(svrec(&["evaluate", "--recon", p(&phantom), "--reference", p(&phantom), "--out", p(&out)]).status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.contains("\"psnr\": \"inf\""), "{text}");
    let rep: EvalReport = serde_json::from_str(&text).unwrap();
    assert_eq!(rep.ssim, 1.0);
}

#[test]
fn spacing_guard_on_initializations() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL_CONFIG);
    let train = simulate(tmp.path(), &cfg, 7, 0.0, 2, "train");
    let val = simulate(tmp.path(), &cfg, 8, 0.0, 1, "val");
    let ckpt = tmp.path().join("meta.ckpt");
    let o = svrec(&["meta-train", "--train-dir", p(&train), "--val-dir", p(&val), "--config", p(&cfg), "--out", p(&ckpt)]);
    assert!(o.status.success());
    assert!(tmp.path().join("meta.log.csv").is_file());

    // same geometry but 3 mm slices
    let thick_dir = tmp.path().join("thick_cfg");
    std::fs::create_dir(&thick_dir).unwrap();
    let thick = write_config(&thick_dir, &SMALL_CONFIG.replace("thickness = 4.0", "thickness = 3.0"));
    let other = simulate(tmp.path(), &thick, 9, 0.0, 1, "thick").join("case_000");
    let run = |force: bool| {
        let out = tmp.path().join(if force { "forced" } else { "refused" });
        let mut args = vec!["reconstruct", "--case", p(&other), "--init", p(&ckpt), "--config", p(&cfg), "--out", p(&out)];
        if force {
            args.push("--force");
        }
        svrec(&args).status.code()
    };
    assert_eq!(run(false), Some(4));
    assert_eq!(run(true), Some(0));

    // a meta-initialization has no volume frame to render
    let o = svrec(&["render", "--model", p(&ckpt), "--spacing", "2", "--out", p(&tmp.path().join("x.vol"))]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn bad_inputs_exit_with_code_2() {
    let tmp = tempfile::tempdir().unwrap();
    let no_seed = tmp.path().join("noseed.toml");
    std::fs::write(&no_seed, "[recon]\nk_cap = 8\n").unwrap();
    let junk = tmp.path().join("junk.vol");
    std::fs::write(&junk, b"not a volume").unwrap();
    let case = tmp.path().join("empty");
    std::fs::create_dir(&case).unwrap();
    let out = tmp.path().join("out");
    for args in [
        vec!["reconstruct", "--case", p(&case), "--config", p(&no_seed), "--out", p(&out)],
        vec!["evaluate", "--recon", p(&junk), "--reference", p(&junk), "--out", p(&out)],
        vec!["render", "--model", p(&junk), "--spacing", "1", "--out", p(&out)],
    ] {
        assert_eq!(svrec(&args).status.code(), Some(2), "{args:?}");
    }
    let o = std::process::Command::new(env!("CARGO_BIN_EXE_svrec"))
        .args(["simulate", "--phantom-seed", "1", "--out", p(&out)])
        .env("SVREC_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn render_resamples_a_trained_model() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &SMALL_CONFIG.replace("alpha = 40.0", "alpha = 5.0"));
    let case = simulate(tmp.path(), &cfg, 3, 0.0, 1, "sim").join("case_000");
    let rec = tmp.path().join("rec");
    assert!(svrec(&["reconstruct", "--case", p(&case), "--config", p(&cfg), "--out", p(&rec)]).status.success());
    let fine = tmp.path().join("fine.vol");
    assert!(svrec(&["render", "--model", p(&rec.join("model.ckpt")), "--spacing", "1", "--out", p(&fine)]).status.success());
    let coarse = Volume::load(&rec.join("volume.vol")).unwrap();
    let fine = Volume::load(&fine).unwrap();
    assert_eq!(fine.spacing, [1.0; 3]);
    assert_eq!(fine.origin, coarse.origin);
    // every second fine voxel is a coarse voxel
    for k in 0..coarse.dims[2] {
        for j in 0..coarse.dims[1] {
            for i in 0..coarse.dims[0] {
                if 2 * i < fine.dims[0] && 2 * j < fine.dims[1] && 2 * k < fine.dims[2] {
                    assert_eq!(coarse.get(i, j, k), fine.get(2 * i, 2 * j, 2 * k));
                }
            }
        }
    }
}
