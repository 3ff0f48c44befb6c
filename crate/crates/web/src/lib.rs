//! Browser bindings: a small-system distribution explorer, a one-shot
//! coarse-grained certification and the chi-squared reference curve.
//!
//! Every entry point returns a JSON string; the page parses it.

use bosoncert::coarsegrain::{build_bubbles, BubbleParams};
use bosoncert::distributions::{
    boson_distribution, distinguishable_distribution, fidelity, OutcomeDistribution,
};
use bosoncert::fock::{hilbert_dim, FockState, ProblemShape};
use bosoncert::interferometer::haar_unitary;
use bosoncert::rng::Seed;
use bosoncert::sampling::{draw_from_table, draw_uniform};
use bosoncert::stats::{certify, chi2_cutoff, chi2_pdf};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Largest state space the page will tabulate.
pub const MAX_DIM: u64 = 200_000;

type Result<T> = std::result::Result<T, String>;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

#[derive(Serialize)]
struct Outcome {
    state: Vec<u8>,
    boson: f64,
    distinguishable: f64,
}

#[derive(Serialize)]
struct Explorer {
    dim: u64,
    fidelity: f64,
    /// Most likely boson outcomes, descending.
    top: Vec<Outcome>,
}

fn tables(m: usize, n: usize, seed: u64) -> Result<(OutcomeDistribution, OutcomeDistribution)> {
    let dim = hilbert_dim(m, n).map_err(err)?;
    if dim > MAX_DIM {
        return Err(format!("D = {dim} is above the demo limit of {MAX_DIM}"));
    }
    let u = haar_unitary(m, seed).map_err(err)?;
    let input = FockState::single_occupancy(m, n).map_err(err)?;
    let q = boson_distribution(&u, &input).map_err(err)?;
    let c = distinguishable_distribution(&u, &input).map_err(err)?;
    Ok((q, c))
}

/// Boson and distinguishable-particle probabilities of the `top` most
/// likely outcomes of an `m`-mode Haar device with `n` photons.
pub fn explore_json(m: usize, n: usize, seed: u64, top: usize) -> Result<String> {
    let (q, c) = tables(m, n, seed)?;
    let shape = ProblemShape::new(m, n).map_err(err)?;
    let mut order: Vec<usize> = (0..q.probs().len()).collect();
    order.sort_by(|&a, &b| q.probs()[b].total_cmp(&q.probs()[a]).then(a.cmp(&b)));
    let top = order
        .into_iter()
        .take(top)
        .map(|r| {
            let state = shape.unrank(r as u64).map_err(err)?;
            Ok(Outcome {
                state: state.occupations().to_vec(),
                boson: q.probs()[r],
                distinguishable: c.probs()[r],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let out = Explorer {
        dim: shape.dim(),
        fidelity: fidelity(&q, &c).map_err(err)?,
        top,
    };
    serde_json::to_string(&out).map_err(err)
}

#[derive(Serialize)]
struct Certification {
    bins: usize,
    reference: Vec<u64>,
    candidate: Vec<u64>,
    chi2: f64,
    df: u32,
    p_value: f64,
    pass: bool,
}

/// Draws a reference boson sample and a candidate sample (`boson`,
/// `distinguishable` or `uniform`), groups both into bubbles grown from the
/// reference and runs the two-sample test.
#[allow(clippy::too_many_arguments)]
pub fn certify_json(
    m: usize,
    n: usize,
    seed: u64,
    candidate: &str,
    n_m: u64,
    target_n_b: usize,
    alpha: f64,
    run: u64,
) -> Result<String> {
    let (q, c) = tables(m, n, seed)?;
    let reference = draw_from_table(&q, n_m, Seed::new(run, 1)).map_err(err)?;
    let other = match candidate {
        "boson" => draw_from_table(&q, n_m, Seed::new(run, 2)),
        "distinguishable" => draw_from_table(&c, n_m, Seed::new(run, 3)),
        "uniform" => draw_uniform(m, n, n_m, Seed::new(run, 4)),
        _ => return Err(format!("unknown candidate sampler '{candidate}'")),
    }
    .map_err(err)?;
    let partition = build_bubbles(&reference, &BubbleParams::new(target_n_b)).map_err(err)?;
    let c1 = partition.coarse_grain_sample(&reference).map_err(err)?;
    let c2 = partition.coarse_grain_sample(&other).map_err(err)?;
    let report = certify(&c1, &c2, alpha, "reference", candidate).map_err(err)?;
    let out = Certification {
        bins: partition.len(),
        reference: c1.masses().to_vec(),
        candidate: c2.masses().to_vec(),
        chi2: report.chi2,
        df: report.df,
        p_value: report.p_value,
        pass: report.pass,
    };
    serde_json::to_string(&out).map_err(err)
}

#[derive(Serialize)]
struct Curve {
    x: Vec<f64>,
    density: Vec<f64>,
    cutoff: f64,
}

/// Chi-squared density on `points` abscissae and the rejection cutoff at `alpha`.
pub fn chi2_curve_json(df: u32, alpha: f64, points: usize) -> Result<String> {
    let cutoff = chi2_cutoff(alpha, df).map_err(err)?;
    let hi = (1.5 * cutoff).max(f64::from(df) + 6.0 * f64::from(2 * df).sqrt());
    let points = points.max(2);
    let x: Vec<f64> = (0..points)
        .map(|i| hi * i as f64 / (points - 1) as f64)
        .collect();
    let density = x.iter().map(|&v| chi2_pdf(v, f64::from(df))).collect();
    serde_json::to_string(&Curve { x, density, cutoff }).map_err(err)
}

#[wasm_bindgen]
pub fn explore(m: usize, n: usize, seed: u64, top: usize) -> std::result::Result<String, JsError> {
    explore_json(m, n, seed, top).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn certify_pair(
    m: usize,
    n: usize,
    seed: u64,
    candidate: &str,
    n_m: u64,
    target_n_b: usize,
    alpha: f64,
    run: u64,
) -> std::result::Result<String, JsError> {
    certify_json(m, n, seed, candidate, n_m, target_n_b, alpha, run).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn chi2_curve(df: u32, alpha: f64, points: usize) -> std::result::Result<String, JsError> {
    chi2_curve_json(df, alpha, points).map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    #[test]
    fn explorer_is_sorted_and_bounded() {
        let v: Value = serde_json::from_str(&explore_json(6, 3, 1, 5).unwrap()).unwrap();
        assert_eq!(v["dim"], 56);
        let top = v["top"].as_array().unwrap();
        assert_eq!(top.len(), 5);
        let p: Vec<f64> = top.iter().map(|o| o["boson"].as_f64().unwrap()).collect();
        assert!(p.windows(2).all(|w| w[0] >= w[1]));
        let f = v["fidelity"].as_f64().unwrap();
        assert!(f > 0.0 && f <= 1.0);
        assert!(explore_json(40, 5, 1, 5).is_err());
    }

    #[test]
    fn certification_conserves_counts_and_rejects_uniform() {
        let v: Value =
            serde_json::from_str(&certify_json(8, 3, 2, "uniform", 5000, 12, 0.01, 1).unwrap())
                .unwrap();
        for key in ["reference", "candidate"] {
            let s: u64 = v[key].as_array().unwrap().iter().map(|c| c.as_u64().unwrap()).sum();
            assert_eq!(s, 5000);
        }
        assert_eq!(v["pass"], false);
        assert!(certify_json(8, 3, 2, "quantum", 100, 4, 0.01, 1).is_err());
    }

    #[test]
    fn curve_cutoff_matches_table() {
        let v: Value = serde_json::from_str(&chi2_curve_json(1, 0.05, 50).unwrap()).unwrap();
        // upper 5% point of chi-squared with one degree of freedom
        assert!((v["cutoff"].as_f64().unwrap() - 3.841_458_820_694_12).abs() < 1e-9);
        assert_eq!(v["x"].as_array().unwrap().len(), 50);
    }
}
