//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use maskrefine::bayes::{corner_erosion_probe, refine_iterate, BayesConfig};
use maskrefine::io::*;
use maskrefine::net::{forward, init_params, params_grad_check, refine_mask, RefinerConfig};
use maskrefine::synth::*;
use maskrefine::tensor::{grad_check, Tensor4};
use maskrefine::train::*;
use maskrefine::{Error, Image};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

const GRAD_TOL: f64 = 1e-3;
const SEEDS: u64 = 20;

fn gradients() -> Outcome {
    let mut worst_layer = ("", 0.0f64);
    let mut failures = Vec::new();
    for seed in 0..SEEDS {
        for (name, layer, inputs) in common::layer_cases(seed) {
            let err = grad_check(&layer, &inputs, seed).map_err(|e| e.to_string())?;
            if err >= GRAD_TOL {
                failures.push(format!("{name} seed {seed}: {err:.2e}"));
            }
            if err > worst_layer.1 {
                worst_layer = (name, err);
            }
        }
    }
    let mut worst_net = 0.0f64;
    let mut skipped = 0;
    let mut compared = 0;
    for seed in 0..SEEDS {
        let p = init_params(&common::tiny_config(), seed)
            .unwrap()
            .cast::<f64>();
        let c = params_grad_check(&p, &common::random_batch(1000 + seed, 8, 8))
            .map_err(|e| e.to_string())?;
        if c.max_error >= GRAD_TOL || c.compared < c.skipped {
            failures.push(format!("network seed {seed}: {c:?}"));
        }
        worst_net = worst_net.max(c.max_error);
        skipped += c.skipped;
        compared += c.compared;
    }
    let detail = format!(
        "layers worst {:.1e} ({}); network worst {worst_net:.1e} over {compared} parameters \
         ({skipped} kink-crossing probes skipped)",
        worst_layer.1, worst_layer.0
    );
    if failures.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{detail}; failures: {}", failures.join(", ")))
    }
}

fn bayes_oracle() -> Outcome {
    let cfg = BayesConfig::default();
    let mismatches: Vec<u64> = (0..100)
        .filter(|&seed| {
            let m = common::random_mask(seed, 8, 8);
            let ours = refine_iterate(&m, &cfg).unwrap();
            common::to_rows(&ours) != common::naive_refine(&common::to_rows(&m), 5, 1.5, 10, 0.5)
        })
        .collect();
    check(
        mismatches.is_empty(),
        format!("100 masks, mismatching seeds {mismatches:?}"),
    )
}

fn mean_f(records: &[MetricsRecord]) -> f64 {
    MetricsRecord::mean(records).f_measure
}

fn baseline_efficacy() -> Outcome {
    let test = make_dataset(7, 50, &DatasetConfig::new(64, 64)).unwrap();
    let cfg = BayesConfig::default();
    let raw: Vec<_> = test
        .iter()
        .map(|s| evaluate(&s.mask_noisy, &s.mask_gt).unwrap())
        .collect();
    let by: Vec<_> = test
        .iter()
        .map(|s| evaluate(&refine_iterate(&s.mask_noisy, &cfg).unwrap(), &s.mask_gt).unwrap())
        .collect();
    let (r, b) = (mean_f(&raw), mean_f(&by));
    // Bands frozen from the reference build.
    let in_bands = (r - 0.8251).abs() < 0.005 && (b - 0.9184).abs() < 0.005;
    check(
        b > r && in_bands,
        format!("raw F {r:.4}, bayes F {b:.4} (bands 0.8251 / 0.9184 +- 0.005)"),
    )
}

fn over_smoothing() -> Outcome {
    let r = corner_erosion_probe(&BayesConfig::default()).map_err(|e| e.to_string())?;
    check(
        r.thin_spur == 0 && r.interior_unchanged,
        format!(
            "thin spur pixels left {}, spur pixels fg {}/{}, notch kept {}/{}, interior unchanged {}",
            r.thin_spur,
            r.counts.spur_survived,
            r.counts.spur_total,
            r.counts.notch_survived,
            r.counts.notch_total,
            r.interior_unchanged
        ),
    )
}

fn method_claim() -> Outcome {
    let data_cfg = DatasetConfig::new(64, 64);
    let train_set = make_dataset(13, 200, &data_cfg).unwrap();
    let test = make_dataset(7, 50, &data_cfg).unwrap();
    let overlap = test
        .iter()
        .filter(|t| train_set.iter().any(|s| s.mask_gt == t.mask_gt))
        .count();
    if overlap > 0 {
        return Err(format!("{overlap} test samples also appear in training"));
    }
    let start = Instant::now();
    let cfg = TrainConfig {
        epochs: 30,
        seed: 13,
        ..TrainConfig::default()
    };
    let out =
        train(&cfg, &RefinerConfig::default(), &train_set, |_, _| {}).map_err(|e| e.to_string())?;
    let bayes = BayesConfig::default();
    let report = compare(&test, &out.params, &bayes, 0.5).map_err(|e| e.to_string())?;
    let (fb, fnet) = (report.bayes.mean.f_measure, report.network.mean.f_measure);
    let details = make_detail_set(
        7,
        20,
        64,
        64,
        &NoiseConfig::default(),
        &RenderParams::default(),
    )
    .unwrap();
    let (db, dn) =
        detail_survival(&details, &out.params, &bayes, 0.5).map_err(|e| e.to_string())?;
    let a = fnet >= fb - 0.02;
    let b = dn.recall() > db.recall();
    check(
        a && b,
        format!(
            "(a) {} network F {fnet:.4} vs bayes F {fb:.4}; (b) {} detail recall network {:.4} \
             (spur {}/{}, notch {}/{}) vs bayes {:.4} (spur {}/{}, notch {}/{}); loss {:.4} -> {:.4}; {:.0}s",
            if a { "ok" } else { "FAIL" },
            if b { "ok" } else { "FAIL" },
            dn.recall(),
            dn.spur_survived,
            dn.spur_total,
            dn.notch_survived,
            dn.notch_total,
            db.recall(),
            db.spur_survived,
            db.spur_total,
            db.notch_survived,
            db.notch_total,
            out.loss_history[0],
            out.loss_history[out.loss_history.len() - 1],
            start.elapsed().as_secs_f64()
        ),
    )
}

fn overfit() -> Outcome {
    let sample = make_dataset(21, 1, &DatasetConfig::new(32, 32)).unwrap();
    let cfg = TrainConfig {
        epochs: 300,
        ..TrainConfig::default()
    };
    let out =
        train(&cfg, &RefinerConfig::default(), &sample, |_, _| {}).map_err(|e| e.to_string())?;
    let s = &sample[0];
    let refined = refine_mask(&out.params, &s.mask_noisy, &s.source, 0.5).unwrap();
    let f = evaluate(&refined, &s.mask_gt).unwrap().f_measure;
    check(
        out.steps == 300 && f >= 0.99,
        format!("{} steps, F {f:.4}", out.steps),
    )
}

fn determinism_and_formats() -> Outcome {
    let mut problems = Vec::new();
    let data_cfg = DatasetConfig::new(32, 32);

    let a = make_dataset(3, 16, &data_cfg).unwrap();
    let b = make_dataset(3, 16, &data_cfg).unwrap();
    for (x, y) in a.iter().zip(&b) {
        let src = x
            .source
            .data()
            .iter()
            .zip(y.source.data())
            .all(|(p, q)| (p - q).abs() <= 1e-6);
        if x.mask_gt != y.mask_gt || x.mask_noisy != y.mask_noisy || !src {
            problems.push("dataset differs between runs".to_string());
            break;
        }
    }

    let cfg = TrainConfig {
        epochs: 2,
        seed: 4,
        ..TrainConfig::default()
    };
    let net = RefinerConfig::default();
    let t1 = fit(&cfg, &net, &a, |_, _| {}).unwrap();
    let t2 = fit(&cfg, &net, &a, |_, _| {}).unwrap();
    let (c1, c2) = (save_checkpoint(&t1.params), save_checkpoint(&t2.params));
    if c1 != c2 || t1.loss_history != t2.loss_history {
        problems.push("training not bit-reproducible".into());
    }
    match load_checkpoint(&c1) {
        Ok(p) if save_checkpoint(&p) == c1 && p == t1.params => {}
        _ => problems.push("checkpoint roundtrip".into()),
    }

    let img = frame_to_pgm(&a[0].source);
    let bytes = write_pgm(&img);
    match read_pgm(&bytes) {
        Ok(back) if write_pgm(&back) == bytes && back == img => {}
        _ => problems.push("pgm roundtrip".into()),
    }

    let pgm_field = |bytes: &[u8]| match read_pgm(bytes) {
        Err(Error::Parse { field, reason }) => format!("{field}: {reason}"),
        other => format!("unexpected {other:?}"),
    };
    let pgm_cases: [(&[u8], &str); 3] = [
        (b"P6\n4 4\n255\n", "magic: unsupported magic"),
        (b"P5\n4 4\n1023\n", "maxval: "),
        (b"P5\n4 4\n255\n\x01\x02", "pixels: truncated pixel data"),
    ];
    for (input, want) in pgm_cases {
        let got = pgm_field(input);
        if !got.starts_with(want) {
            problems.push(format!("pgm error {got:?}, expected {want:?}"));
        }
    }

    let ckpt_msg = |bytes: &[u8]| match load_checkpoint(bytes) {
        Err(Error::Checkpoint(m)) => m,
        other => format!("unexpected {other:?}"),
    };
    let mut bad_magic = c1.clone();
    bad_magic[..4].copy_from_slice(b"XXXX");
    let mut bad_version = c1.clone();
    bad_version[4] = 2;
    let ckpt_cases = [
        (bad_magic, "bad magic"),
        (c1[..c1.len() - 4].to_vec(), "length mismatch"),
        (bad_version, "unsupported version"),
    ];
    for (input, want) in ckpt_cases {
        let got = ckpt_msg(&input);
        if !got.starts_with(want) {
            problems.push(format!("checkpoint error {got:?}, expected {want:?}"));
        }
    }

    let dir = tempfile::tempdir().unwrap();
    write_dataset_dir(dir.path(), &a[..3]).unwrap();
    std::fs::remove_file(dir.path().join(MASK_DIR).join("000003.pgm")).unwrap();
    match load_dataset_dir(dir.path()) {
        Err(e @ Error::Ingestion { .. }) if e.to_string().contains("000003/mask") => {}
        other => problems.push(format!("missing counterpart gave {other:?}")),
    }
    let dims_dir = tempfile::tempdir().unwrap();
    write_dataset_dir(dims_dir.path(), &a[..1]).unwrap();
    std::fs::write(
        dims_dir.path().join(GT_DIR).join("000001.pgm"),
        write_pgm(&Image::filled(4, 4, 0)),
    )
    .unwrap();
    if !matches!(
        load_dataset_dir(dims_dir.path()),
        Err(Error::Ingestion { .. })
    ) {
        problems.push("dim mismatch not an ingestion error".into());
    }

    check(
        problems.is_empty(),
        if problems.is_empty() {
            "dataset, training and checkpoints reproducible; roundtrips byte-identical; \
             every error case as specified"
                .into()
        } else {
            problems.join("; ")
        },
    )
}

fn mechanism_wiring() -> Outcome {
    let s = &make_dataset(8, 1, &DatasetConfig::new(32, 32)).unwrap()[0];
    let (mask, source) = (s.mask_noisy.to_tensor(), s.source.to_tensor());
    let zero = Tensor4::zeros(source.dims());
    let changed = (0..20)
        .filter(|&seed| {
            let p = init_params(&RefinerConfig::default(), seed).unwrap();
            forward(&p, &mask, &source)
                .unwrap()
                .max_abs_diff(&forward(&p, &mask, &zero).unwrap())
                > 0.0
        })
        .count();
    check(
        changed >= 19,
        format!("zeroed source changes output for {changed}/20 initializations"),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("1 gradient correctness", gradients),
        ("2 bayes oracle equivalence", bayes_oracle),
        ("3 baseline efficacy", baseline_efficacy),
        ("4 over-smoothing reproduction", over_smoothing),
        ("5 method claim at desk scale", method_claim),
        ("6 overfit sanity", overfit),
        ("7 determinism and formats", determinism_and_formats),
        ("8 mechanism wiring", mechanism_wiring),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let start = Instant::now();
        let (tag, detail) = match run() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!(
            "{tag} criterion {name}: {detail} [{:.1}s]",
            start.elapsed().as_secs_f64()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
