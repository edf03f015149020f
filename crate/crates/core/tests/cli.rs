mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bsg::cli::{self, GameFile, StreamSpec};
use common::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use tempfile::TempDir;

fn bsg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bsg")).args(args).env_remove("BSG_LOG").output().unwrap()
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const K22: &str = "bipartite 2 2 4\n0 0\n0 1\n1 0\n1 1\n";
const TINY_GAME: &str = "bsgame 2 1 0.5 0.005\n0.1 -0.2\n0.05\n2\n0 0 0.5\n1 0 -0.4\n";

#[test]
fn oracle_mcm_on_k33() {
    let dir = TempDir::new().unwrap();
    let edges: String = (0..3).flat_map(|u| (0..3).map(move |v| format!("{u} {v}\n"))).collect();
    let g = write(&dir, "k33.txt", &format!("bipartite 3 3 9\n{edges}"));
    let out = bsg(&["oracle", "mcm", s(&g)]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8(out.stdout).unwrap().trim(), "3");
}

#[test]
fn oracle_reg_optimum_prints_certificate() {
    let dir = TempDir::new().unwrap();
    let g = write(&dir, "g.txt", TINY_GAME);
    let out = bsg(&["oracle", "reg-optimum", s(&g), "--tolerance", "1e-12"]);
    assert_eq!(out.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["gap"].as_f64().unwrap() <= 1e-12);
}

#[test]
fn oracle_refuses_oversized_fixpoint() {
    let dir = TempDir::new().unwrap();
    let n = 65;
    let row = vec!["0.5"; n].join(" ") + "\n";
    let d = vec![format!("{}", 1.0 / n as f64); n].join(" ") + "\n";
    let text = format!("ot {n} {n} 0.1\n{}{d}{d}", row.repeat(n));
    let p = write(&dir, "big.txt", &text);
    assert_eq!(bsg(&["oracle", "fixpoint", s(&p)]).status.code(), Some(cli::EXIT_REFUSED));
}

#[test]
fn solve_tiny_game_certifies() {
    let dir = TempDir::new().unwrap();
    let g = write(&dir, "g.txt", TINY_GAME);
    let sol = dir.path().join("x.csv");
    let out = bsg(&["solve", s(&g), "--sigma", "1e-6", "--out", s(&sol)]);
    assert_eq!(out.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["final_gap"].as_f64().unwrap() <= 1e-6);
    let csv = std::fs::read_to_string(sol).unwrap();
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn solve_exit_codes() {
    let dir = TempDir::new().unwrap();
    assert_eq!(bsg(&["solve", "/nonexistent/game.txt"]).status.code(), Some(cli::EXIT_INPUT));
    let g = write(&dir, "g.txt", TINY_GAME);
    let out = bsg(&["solve", s(&g), "--sigma", "1e-10", "--max-outer", "1"]);
    assert_eq!(out.status.code(), Some(cli::EXIT_UNCERTIFIED));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["final_gap"].as_f64().unwrap() > 1e-10);
    let bad = write(&dir, "bad.txt", "bsgame 2 1 0.5 0.005\n0.1 -0.2\n0.05\n0 7 0.5\n");
    let out = bsg(&["solve", s(&bad)]);
    assert_eq!(out.status.code(), Some(cli::EXIT_INPUT));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 4"));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = TempDir::new().unwrap();
    let g = write(&dir, "g.txt", TINY_GAME);
    let cfg = write(&dir, "run.cfg", "# solver limits\nmax-outer = 1\nsigma = 1e-10\n");
    assert_eq!(bsg(&["solve", s(&g), "--config", s(&cfg)]).status.code(), Some(cli::EXIT_UNCERTIFIED));
    let out = bsg(&["solve", s(&g), "--config", s(&cfg), "--max-outer", "1000000", "--sigma", "1e-6"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn ddbm_single_edge() {
    let dir = TempDir::new().unwrap();
    let g = write(&dir, "g.txt", "bipartite 1 1 1\n0 0\n");
    let st = write(&dir, "s.txt", "0\n");
    let out = bsg(&["ddbm", s(&g), s(&st), "--no-timestamps"]);
    assert_eq!(out.status.code(), Some(0));
    let kinds: Vec<String> = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str::<Value>(l).unwrap()["event"].as_str().unwrap().to_string())
        .collect();
    assert_eq!(kinds.iter().filter(|k| *k == "deletion").count(), 1);
    assert_eq!(kinds.last().map(String::as_str), Some("terminate"));
}

#[test]
fn ddbm_audit_passes_on_k22() {
    let dir = TempDir::new().unwrap();
    let g = write(&dir, "g.txt", K22);
    for kind in ["sinkhorn", "bs"] {
        let st = write(&dir, "s.txt", "0\n3\n1\n2\n");
        let out = bsg(&["ddbm", s(&g), s(&st), "--audit", "--no-timestamps", "--kind", kind, "--epsilon", "0.1"]);
        assert_eq!(out.status.code(), Some(0), "{kind}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn ddbm_dead_edge_is_input_error() {
    let dir = TempDir::new().unwrap();
    let g = write(&dir, "g.txt", K22);
    let st = write(&dir, "s.txt", "0\n0\n");
    assert_eq!(bsg(&["ddbm", s(&g), s(&st), "--no-timestamps"]).status.code(), Some(cli::EXIT_INPUT));
}

#[test]
fn ddbm_seeded_adversary_reproducible() {
    let dir = TempDir::new().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let g = write(&dir, "g.txt", &cli::render_graph(&random_graph(&mut rng, 6, 6, 0.5)));
    let st = write(&dir, "s.txt", "@adversary random 7\n");
    let a = bsg(&["ddbm", s(&g), s(&st), "--no-timestamps"]);
    let b = bsg(&["ddbm", s(&g), s(&st), "--no-timestamps"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn sinkhorn_one_by_one_is_exact() {
    let dir = TempDir::new().unwrap();
    let p = write(&dir, "o.txt", "ot 1 1 0.1\n0.3\n1\n1\n");
    let plan = dir.path().join("p.csv");
    assert_eq!(bsg(&["sinkhorn", s(&p), "--method", "unaccel", "--out", s(&plan)]).status.code(), Some(0));
    assert_eq!(std::fs::read_to_string(plan).unwrap().trim(), "1");
}

#[test]
fn sinkhorn_zero_cost_gives_outer_product() {
    let dir = TempDir::new().unwrap();
    let (dl, dr) = ([0.2, 0.3, 0.5], [0.6, 0.4]);
    let p = write(&dir, "o.csv", "ot,3,2,0.2\n0,0\n0,0\n0,0\n0.2,0.3,0.5\n0.6,0.4\n");
    let plan = dir.path().join("p.csv");
    assert_eq!(bsg(&["sinkhorn", s(&p), "--out", s(&plan)]).status.code(), Some(0));
    let text = std::fs::read_to_string(plan).unwrap();
    for (i, line) in text.lines().enumerate() {
        for (j, v) in line.split(',').enumerate() {
            assert!((v.parse::<f64>().unwrap() - dl[i] * dr[j]).abs() <= 1e-9);
        }
    }
}

#[test]
fn sinkhorn_methods_agree() {
    let dir = TempDir::new().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let inst = random_ot(&mut rng, 4, 5, 0.2);
    let p = write(&dir, "o.csv", &cli::render_ot(&inst));
    let eps = 1e-3;
    let out = bsg(&["sinkhorn", s(&p), "--method", "both", "--epsilon", "0.001"]);
    assert_eq!(out.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let objs: Vec<f64> = v.as_array().unwrap().iter().map(|r| r["objective"].as_f64().unwrap()).collect();
    assert_eq!(objs.len(), 2);
    assert!((objs[0] - objs[1]).abs() <= 2.0 * eps);
}

#[test]
fn sinkhorn_malformed_csv() {
    let dir = TempDir::new().unwrap();
    let p = write(&dir, "o.csv", "ot,2,2,0.1\n0,1\n1,x\n0.5,0.5\n0.5,0.5\n");
    assert_eq!(bsg(&["sinkhorn", s(&p)]).status.code(), Some(cli::EXIT_INPUT));
}

#[test]
fn emitted_files_reparse() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let g = random_graph(&mut rng, 5, 4, 0.5);
    let back = cli::parse_graph(&cli::render_graph(&g)).unwrap();
    assert_eq!(back.edges(), g.edges());
    let inst = random_ot(&mut rng, 3, 4, 0.3);
    let back = cli::parse_ot(&cli::render_ot(&inst)).unwrap();
    assert_eq!((back.cost(), back.d_l(), back.d_r(), back.mu()), (inst.cost(), inst.d_l(), inst.d_r(), inst.mu()));
    let game = random_game(&mut rng, 5, 3, 0.5, 0.005);
    let file = GameFile { m: 5, n: 3, mu: 0.5, eps: 0.005, c: game.c().to_vec(), b: game.b().to_vec(), triplets: game.a().triplets() };
    assert_eq!(GameFile::parse(&file.render()).unwrap(), file);
    let spec = StreamSpec::parse("4\n2\n@adversary random 11\n", 0).unwrap();
    assert_eq!(spec.edges, vec![4, 2]);
}
