mod common;

use common::*;
use cotrade_core::infomap::{detect, map_equation, DetectorConfig, Partition};
use cotrade_core::network::{NetworkId, ValidatedNetwork};

fn cfg(trials: usize, seed: u64) -> DetectorConfig {
    DetectorConfig {
        trials,
        seed,
        ..Default::default()
    }
}

#[test]
fn oracle_agrees_with_library_codelength() {
    for (name, net) in small_battery() {
        let nodes: Vec<String> = net.nodes.iter().cloned().collect();
        let candidates = [
            vec![nodes.clone()],
            nodes.iter().map(|n| vec![n.clone()]).collect::<Vec<_>>(),
            nodes.chunks(2).map(<[String]>::to_vec).collect(),
            nodes.chunks(3).map(<[String]>::to_vec).collect(),
        ];
        for clusters in candidates {
            let p = Partition::from_clusters(net.id.clone(), clusters.clone());
            let lib = map_equation(&net, &p).unwrap();
            let oracle = oracle_codelength(&net, &clusters);
            assert!((lib - oracle).abs() < 1e-12, "{name}: {lib} vs {oracle}");
        }
    }
}

#[test]
fn detect_reaches_exhaustive_minimum_on_small_networks() {
    for (name, net) in small_battery() {
        let (best, best_clusters) = exhaustive_minimum(&net);
        let p = detect(&net, &cfg(100, 3)).unwrap();
        let recomputed = oracle_codelength(&net, &p.clusters);
        assert!((p.codelength - recomputed).abs() < 1e-9, "{name}: self-consistency");
        assert!(
            p.codelength <= best + 1e-9,
            "{name}: detect {} ({:?}) vs optimum {} ({:?})",
            p.codelength,
            p.clusters,
            best,
            best_clusters
        );
    }
}

#[test]
fn never_worse_than_one_module() {
    for (name, net) in small_battery() {
        let all = Partition::from_clusters(net.id.clone(), vec![net.nodes.iter().cloned().collect()]);
        let one = map_equation(&net, &all).unwrap();
        let p = detect(&net, &cfg(3, 9)).unwrap();
        assert!(p.codelength <= one + 1e-12, "{name}");
    }
}

#[test]
fn two_disconnected_cliques_give_two_clusters() {
    let mut e = Vec::new();
    for g in [0usize, 5] {
        for i in g..g + 5 {
            for j in (i + 1)..g + 5 {
                e.push((node(i), node(j), 1));
            }
        }
    }
    let net = network(&e);
    let p = detect(&net, &cfg(20, 1)).unwrap();
    assert_eq!(p.sizes(), vec![5, 5]);
}

#[test]
fn relabeling_nodes_relabels_the_partition() {
    let (net, _) = planted_partition(&[12, 15, 10], 0.8, 0.02, 5);
    let p = detect(&net, &cfg(20, 4)).unwrap();
    // reverse the lexical order of ids
    let rename = |s: &str| format!("z{}", 9999 - s[1..].parse::<u32>().unwrap());
    let edges: Vec<(String, String, u8)> = net
        .edges
        .iter()
        .map(|((i, j), e)| (rename(i), rename(j), e.weight))
        .collect();
    let renamed: ValidatedNetwork = network(&edges);
    let q = detect(&renamed, &cfg(20, 4)).unwrap();
    let mapped = Partition::from_clusters(
        NetworkId::new("T", cotrade_core::WindowId::Y1),
        p.clusters.iter().map(|c| c.iter().map(|s| rename(s)).collect()).collect(),
    );
    assert_eq!(q.clusters, mapped.clusters);
    assert!((q.codelength - p.codelength).abs() < 1e-9);
}

#[test]
fn planted_partitions_are_recovered() {
    let shapes: [&[usize]; 5] = [&[20, 20], &[15, 25, 20], &[12, 18, 15, 20], &[10, 14, 12, 16, 20], &[10, 12, 14, 16, 18, 20]];
    for (s, sizes) in shapes.iter().enumerate() {
        for seed in 0..4u64 {
            let (net, truth) = planted_partition(sizes, 0.8, 0.02, 100 * s as u64 + seed);
            let p = detect(&net, &cfg(30, seed)).unwrap();
            let agreement = node_agreement(&p.clusters, &truth);
            assert!(agreement >= 0.95, "sizes {sizes:?} seed {seed}: {agreement}");
        }
    }
}
