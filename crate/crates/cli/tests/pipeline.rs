use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use mutcon::domain::records::write_jsonl;
use mutcon::estimators::{estimate_poem, PoemSettings};
use mutcon::synthlab::{SynthDiscreteModel, SynthModel, SynthWorld};
use mutcon::{build_consistency_matrix, KernelKind, PredictionSet};
use mutcon_cli::config::RunConfig;
use mutcon_cli::evaluate::{compare_human_baseline, HUMAN_BASELINE};
use mutcon_cli::ingest::ingest;

fn mutcon(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_mutcon")).args(args).output().expect("binary runs")
}

fn write_sets(path: &Path, sets: &[&PredictionSet]) {
    write_jsonl(fs::File::create(path).unwrap(), sets.iter().copied()).unwrap();
}

fn world_file(dir: &Path, world: &SynthWorld) -> PathBuf {
    let path = dir.join("preds.jsonl");
    let g = world.generate().unwrap();
    write_sets(&path, &g.all_sets());
    path
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    let text = fs::read_to_string(path).unwrap();
    text.lines().map(|l| l.split(',').map(str::to_owned).collect()).collect()
}

#[test]
fn poem_through_the_cli_equals_library_composition() {
    let dir = tempfile::tempdir().unwrap();
    let world = SynthWorld::discrete(400, 4, &[0.3, 0.4, 0.55, 0.6, 0.75, 0.8], 12).with_coupling(0, 1, 0.7);
    let input = world_file(dir.path(), &world);
    let out = dir.path().join("bundle");
    let status = mutcon(&["eval", "-i", input.to_str().unwrap(), "-e", "poem", "-o", out.to_str().unwrap(), "--permutations", "200"]);
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));

    let g = world.generate().unwrap();
    let c = build_consistency_matrix::<f64>(&g.predictions, KernelKind::Discrete.into()).unwrap();
    let want = estimate_poem(&c, PoemSettings::default()).unwrap();
    let rows = read_csv(&out.join("estimates.csv"));
    assert_eq!(rows[0], ["model", "poem"]);
    for (i, row) in rows[1..].iter().enumerate() {
        assert_eq!(row[0], g.predictions[i].model_id());
        assert_eq!(row[1].parse::<f64>().unwrap(), want.estimate.values()[i]);
    }
    let matrix = read_csv(&out.join("consistency.csv"));
    for i in 0..c.len() {
        for j in 0..c.len() {
            assert_eq!(matrix[i + 1][j + 1].parse::<f64>().unwrap(), c.get(i, j));
        }
    }
    let trajectory: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("em_trajectory.json")).unwrap()).unwrap();
    assert_eq!(trajectory["selected"], want.selected);
}

#[test]
fn all_estimators_in_report_order_and_full_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let input = world_file(dir.path(), &SynthWorld::discrete(200, 4, &[0.3, 0.5, 0.7, 0.9], 1));
    let out = dir.path().join("b");
    let run = mutcon(&["eval", "-i", input.to_str().unwrap(), "-o", out.to_str().unwrap(), "--permutations", "100"]);
    assert!(run.status.success());
    assert_eq!(read_csv(&out.join("estimates.csv"))[0], ["model", "ensemble", "calibrate", "filter", "poem"]);
    for f in ["affinity.csv", "affinity_heatmap.csv", "capability.csv", "correlations.json", "consistency_heatmap.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let heat = read_csv(&out.join("consistency_heatmap.csv"));
    assert_eq!(heat[0], ["row", "col", "value"]);
    assert_eq!(heat.len(), 1 + 16);
}

#[test]
fn unlabeled_input_skips_supervised_sections() {
    let dir = tempfile::tempdir().unwrap();
    let g = SynthWorld::discrete(100, 3, &[0.4, 0.6, 0.8], 2).generate().unwrap();
    let input = dir.path().join("preds.jsonl");
    write_sets(&input, &g.predictions.iter().collect::<Vec<_>>());
    let out = dir.path().join("b");
    let run = mutcon(&["eval", "-i", input.to_str().unwrap(), "-o", out.to_str().unwrap()]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert!(out.join("estimates.csv").exists());
    for f in ["affinity.csv", "capability.csv", "correlations.json"] {
        assert!(!out.join(f).exists(), "{f}");
    }
}

#[test]
fn config_file_with_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let input = world_file(dir.path(), &SynthWorld::continuous(150, &[0.2, 0.5, 1.0, 2.0], 3));
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        format!(
            "inputs = [{:?}]\nkernel = \"abs\"\nestimators = [\"ensemble\", \"filter\"]\n\n[estimator]\np = 0.5\n\n[correlation]\npermutations = 100\n",
            input.to_str().unwrap()
        ),
    )
    .unwrap();
    let out = dir.path().join("b");
    let run = mutcon(&["eval", "-c", cfg.to_str().unwrap(), "-e", "filter", "-o", out.to_str().unwrap()]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert_eq!(read_csv(&out.join("estimates.csv"))[0], ["model", "filter"]);
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["kernel"], "abs");
    assert_eq!(manifest["config"]["estimator"]["p"], 0.5);
    // Negative kernel: no affinity matrix.
    assert!(!out.join("affinity.csv").exists());
}

#[test]
fn ingest_errors_are_machine_readable() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("bad.jsonl");
    fs::write(
        &input,
        "{\"model_id\":\"a\",\"sample_id\":\"q1\",\"draw_index\":0,\"prediction\":\"x\"}\n\
         {\"model_id\":\"a\",\"sample_id\":\"q2\",\"draw_index\":0,\"prediction\":\"y\"}\n\
         {\"model_id\":\"b\",\"sample_id\":\"q1\",\"draw_index\":0,\"prediction\":\"x\"}\n",
    )
    .unwrap();
    let run = mutcon(&["eval", "-i", input.to_str().unwrap(), "-o", dir.path().join("b").to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_slice(&run.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "coverage");
    assert_eq!(err["error"]["sample"], "q2");
    assert_eq!(err["error"]["model"], "b");
}

fn human_world(n: usize, human_sigma: f64, seed: u64) -> SynthWorld {
    let mut w = SynthWorld::discrete(n, 4, &[0.3, 0.35, 0.4, 0.45, 0.5, 0.55, 0.6, 0.65, 0.7, 0.75], seed);
    w.models.push(SynthModel::Discrete(SynthDiscreteModel {
        id: Some("__human_0__".into()),
        ..SynthDiscreteModel::new(human_sigma)
    }));
    w
}

#[test]
fn human_tracks_join_the_roster_on_request() {
    let dir = tempfile::tempdir().unwrap();
    let input = world_file(dir.path(), &human_world(200, 0.9, 5));
    let plain = ingest(&[input.clone()], Default::default(), false).unwrap();
    assert_eq!(plain.predictions.len(), 10);
    let with = ingest(&[input], Default::default(), true).unwrap();
    assert_eq!(with.predictions.len(), 11);
    assert_eq!(with.predictions[10].model_id(), "__human_0__");
}

#[test]
fn annotator_equal_to_labels_is_a_perfect_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let g = SynthWorld::discrete(120, 4, &[0.3, 0.5, 0.6, 0.8, 0.9], 6).generate().unwrap();
    let human = g.labels().clone().with_model_id("__human_0__");
    let input = dir.path().join("preds.jsonl");
    let mut sets = g.all_sets();
    sets.push(&human);
    write_sets(&input, &sets);
    let cfg = RunConfig {
        inputs: vec![input.clone()],
        q_sample_grid: vec![0.5, 1.0],
        protocol: Some(mutcon::EvalProtocol { repeats: 20, ..Default::default() }),
        ..Default::default()
    };
    let data = ingest(&cfg.inputs, cfg.normalization, false).unwrap();
    let rows = compare_human_baseline(&cfg, &data).unwrap();
    for r in rows.iter().filter(|r| r.method == HUMAN_BASELINE) {
        assert_eq!(r.mean_rp, 1.0);
        assert_eq!(r.std_rp, 0.0);
    }
}

#[test]
fn peer_consensus_beats_a_noisy_annotator_on_few_samples() {
    let dir = tempfile::tempdir().unwrap();
    let input = world_file(dir.path(), &human_world(200, 0.6, 7));
    let cfg = RunConfig {
        inputs: vec![input],
        q_sample_grid: vec![0.1, 0.2],
        protocol: Some(mutcon::EvalProtocol { repeats: 300, seed: 3, ..Default::default() }),
        ..Default::default()
    };
    let data = ingest(&cfg.inputs, cfg.normalization, false).unwrap();
    let rows = compare_human_baseline(&cfg, &data).unwrap();
    for q in [0.1, 0.2] {
        let get = |m: &str| rows.iter().find(|r| r.q_sample == q && r.method == m).unwrap().mean_rs;
        assert!(get("poem") >= get(HUMAN_BASELINE), "q = {q}: {rows:?}");
    }
}

#[test]
fn human_compare_requires_an_annotator() {
    let dir = tempfile::tempdir().unwrap();
    let input = world_file(dir.path(), &SynthWorld::discrete(50, 4, &[0.3, 0.5, 0.7, 0.9], 1));
    let run = mutcon(&["human-compare", "-i", input.to_str().unwrap(), "-o", dir.path().join("b").to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_slice(&run.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "config");
}

#[test]
fn synth_and_theorem_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let world = dir.path().join("world.json");
    fs::write(
        &world,
        r#"{"n_samples": 100, "seed": 3, "label_space": {"kind": "discrete", "cardinality": 3},
            "models": [{"sigma": 0.5}, {"sigma": 0.9, "draws": 2}]}"#,
    )
    .unwrap();
    let preds = dir.path().join("p.jsonl");
    let run = mutcon(&["synth", "-w", world.to_str().unwrap(), "-o", preds.to_str().unwrap()]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert_eq!(fs::read_to_string(&preds).unwrap().lines().count(), 100 + 200 + 100);

    let batch = dir.path().join("batch.toml");
    fs::write(
        &batch,
        "worlds = 4\nn_samples = 500\n\n[label_space]\nkind = \"discrete\"\ncardinality = 4\n\n[quality]\nkind = \"uniform\"\ncount = 5\nlow = 0.3\nhigh = 0.9\n",
    )
    .unwrap();
    let out = dir.path().join("t");
    let run = mutcon(&["theorem", "-b", batch.to_str().unwrap(), "--insights", "-o", out.to_str().unwrap()]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&run.stdout).unwrap();
    assert_eq!(summary["worlds"], 4);
    assert!(out.join("theorem.json").exists() && out.join("insights.json").exists());
}

#[test]
fn protocol_sweep_writes_rows_per_q() {
    let dir = tempfile::tempdir().unwrap();
    let input = world_file(dir.path(), &SynthWorld::discrete(100, 4, &[0.3, 0.4, 0.5, 0.6, 0.7], 9));
    let out = dir.path().join("p");
    let run = mutcon(&[
        "protocol", "-i", input.to_str().unwrap(), "-e", "ensemble", "--repeats", "20", "--q-sample-grid", "0.5,1", "-o",
        out.to_str().unwrap(),
    ]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let sweep = read_csv(&out.join("protocol/sweep.csv"));
    assert_eq!(sweep.len(), 3);
    assert_eq!(read_csv(&out.join("protocol/ensemble_q0.5.csv")).len(), 21);
}
