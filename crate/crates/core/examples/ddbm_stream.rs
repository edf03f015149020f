//! Maintain an approximate matching while an adversary deletes every edge.

use bsg::ddbm::{self, BipartiteGraph, CroKind, RunConfig};

fn main() -> bsg::Result<()> {
    let n = 12;
    let edges = (0..n).flat_map(|u| (0..n).map(move |v| (u, v))).filter(|(u, v)| (u * 7 + v * 3) % 5 < 2).collect();
    let g = BipartiteGraph::new(n, n, edges)?;
    println!("{} edges, maximum matching {}", g.m(), g.mcm());

    let mut cfg = RunConfig { audit: true, timestamps: false, ..RunConfig::default() };
    cfg.cro.kind = CroKind::Sinkhorn;
    let log = ddbm::dec_matching_run(&g, 0.1, &mut ddbm::MaxWeight, &cfg)?;
    println!("{} events over {} phases", log.events.len(), log.phases.len());
    println!("recomputes per phase: {:?}", log.recompute_counts());
    println!("worst value / MCM: {:.4}", log.worst_ratio.unwrap_or(1.0));
    println!("audit violations: {}", log.violations.len());
    Ok(())
}
