//! wasm-bindgen exports for `www/index.html`. Every export returns a JSON
//! string; the plain `*_json` functions behind them are what the native
//! tests call.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use quboml::cluster::{self, project_2d};
use quboml::features::{select_features, FeatureQuboSpec, Importance, Redundancy};
use quboml::{simulated_anneal, synth, AnnealConfig, BinaryQuadraticProblem};

const MAX_POINTS: usize = 600;

#[derive(Serialize)]
struct ClusterView {
    k: usize,
    points: Vec<[f64; 2]>,
    truth: Vec<usize>,
    assignments: Vec<usize>,
    candidates: Vec<usize>,
    medoids: Vec<usize>,
    dbi: f64,
    feasible: bool,
}

fn anneal(reads: usize, seed: u64) -> AnnealConfig {
    AnnealConfig {
        reads: reads.max(1),
        ..AnnealConfig::with_seed(seed)
    }
}

pub fn cluster_json(
    n: usize,
    centers: usize,
    k: usize,
    reads: usize,
    seed: u64,
) -> Result<String, String> {
    if n > MAX_POINTS {
        return Err(format!("at most {MAX_POINTS} points"));
    }
    let (points, truth) = synth::blobs(n, centers.max(1), 2, seed);
    let k = (k > 0).then_some(k);
    let r = cluster::cluster(&points, k, 2..=10.min(n.max(2)), &anneal(reads, seed))
        .map_err(|e| e.to_string())?;
    let view = ClusterView {
        k: r.k,
        points: project_2d(&points).map_err(|e| e.to_string())?,
        truth,
        assignments: r.assignments,
        candidates: r.candidates.indices,
        medoids: r.medoids,
        dbi: r.dbi,
        feasible: r.feasible,
    };
    serde_json::to_string(&view).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct FeatureView {
    selected: Vec<usize>,
    informative: [usize; 4],
    importance: Vec<f64>,
    redundancy: Vec<Vec<f64>>,
    energy: f64,
}

pub fn features_json(k: usize, queries: usize, reads: usize, seed: u64) -> Result<String, String> {
    let ds = synth::feature_dataset(queries.clamp(2, 200), 20, seed);
    let spec = FeatureQuboSpec::new(Importance::Mi, Redundancy::Cmi, k);
    let sel = select_features(&ds, &spec, &anneal(reads, seed)).map_err(|e| e.to_string())?;
    let view = FeatureView {
        selected: sel.selected,
        informative: synth::INFORMATIVE,
        importance: sel.importance,
        redundancy: sel.redundancy,
        energy: sel.energy,
    };
    serde_json::to_string(&view).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct SampleView {
    bits: Vec<u8>,
    energy: f64,
    occurrences: usize,
}

pub fn solve_json(problem: &str, reads: usize, seed: u64) -> Result<String, String> {
    let p: BinaryQuadraticProblem = serde_json::from_str(problem).map_err(|e| e.to_string())?;
    let set = simulated_anneal(&p, &anneal(reads, seed)).map_err(|e| e.to_string())?;
    let samples: Vec<SampleView> = set
        .samples
        .iter()
        .map(|s| SampleView {
            bits: s.bits.bits().to_vec(),
            energy: s.energy,
            occurrences: s.occurrences,
        })
        .collect();
    serde_json::to_string(&samples).map_err(|e| e.to_string())
}

/// Blobs in the plane, clustered around QUBO-refined medoids. `k = 0`
/// picks k automatically.
#[wasm_bindgen]
pub fn cluster_demo(
    n: usize,
    centers: usize,
    k: usize,
    reads: usize,
    seed: u32,
) -> Result<String, JsError> {
    cluster_json(n, centers, k, reads, seed as u64).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn feature_demo(k: usize, queries: usize, reads: usize, seed: u32) -> Result<String, JsError> {
    features_json(k, queries, reads, seed as u64).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn solve_demo(problem: &str, reads: usize, seed: u32) -> Result<String, JsError> {
    solve_json(problem, reads, seed as u64).map_err(|e| JsError::new(&e))
}
