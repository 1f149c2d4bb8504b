//! Wall-clock scaling of the pooling operators on sparse random graphs.

use std::fmt;
use std::hint::black_box;
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::components::connected_components;
use crate::edgepool::edgepool_contract;
use crate::error::{Error, Result};
use crate::generate::random_sparse_graph;
use crate::pool::{pool, EdgeScorer};

pub const FEATURE_DIM: usize = 4;
pub const TIMED_CALLS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalingOperator {
    Component,
    Edgepool,
    /// Connected components over the full edge set alone.
    Components,
}

impl fmt::Display for ScalingOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScalingOperator::Component => "component",
            ScalingOperator::Edgepool => "edgepool",
            ScalingOperator::Components => "components",
        })
    }
}

impl FromStr for ScalingOperator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "component" | "component-pool" => Ok(ScalingOperator::Component),
            "edgepool" | "edge-pool" => Ok(ScalingOperator::Edgepool),
            "components" | "connected-components" => Ok(ScalingOperator::Components),
            other => Err(Error::Usage(format!(
                "unknown operator {other:?} (expected component, edgepool or components)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub nodes: usize,
    /// Directed edges stored after symmetrization.
    pub edges: usize,
    pub median_seconds: f64,
    pub timings: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub operator: ScalingOperator,
    pub rows: Vec<ScalingRow>,
    /// Least-squares slope of ln(time) against ln(|V|); needs two sizes.
    pub slope: Option<f64>,
}

fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Least-squares slope of `ys` on `xs`.
pub fn least_squares_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() < 2 || xs.len() != ys.len() {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Times `calls` invocations of `operator` on one random graph per size with
/// `2|V|` drawn undirected edges, reporting medians and the log-log slope.
pub fn bench_pool_scaling(
    operator: ScalingOperator,
    sizes: &[usize],
    calls: usize,
    seed: u64,
) -> Result<ScalingReport> {
    if sizes.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Usage("sizes must be ascending".into()));
    }
    if calls == 0 {
        return Err(Error::Usage("need at least one timed call".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scorer = EdgeScorer::init(FEATURE_DIM, &mut rng);
    let mut rows = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let g = random_sparse_graph(n, 2 * n, FEATURE_DIM, &mut rng);
        let mut timings = Vec::with_capacity(calls);
        // one untimed warm-up call
        for call in 0..=calls {
            let start = Instant::now();
            match operator {
                ScalingOperator::Component => {
                    black_box(pool(black_box(&g), &scorer)?);
                }
                ScalingOperator::Edgepool => {
                    black_box(edgepool_contract(black_box(&g), &scorer)?);
                }
                ScalingOperator::Components => {
                    black_box(connected_components(n, black_box(g.edges()))?);
                }
            }
            if call > 0 {
                timings.push(start.elapsed().as_secs_f64());
            }
        }
        let median_seconds = median(&mut timings.clone());
        rows.push(ScalingRow {
            nodes: n,
            edges: g.num_edges(),
            median_seconds,
            timings,
        });
    }
    let (lx, ly): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter(|r| r.nodes > 0 && r.median_seconds > 0.0)
        .map(|r| ((r.nodes as f64).ln(), r.median_seconds.ln()))
        .unzip();
    Ok(ScalingReport {
        operator,
        slope: least_squares_slope(&lx, &ly),
        rows,
    })
}

/// Parses sizes such as `1e3,1e4,25000`.
pub fn parse_sizes(text: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(|s| {
            let s = s.trim();
            let v: f64 = s
                .parse()
                .map_err(|_| Error::Usage(format!("cannot parse size {s:?}")))?;
            if !(v >= 0.0 && v.fract() == 0.0 && v < 1e12) {
                return Err(Error::Usage(format!("size {s:?} is not a whole number")));
            }
            Ok(v as usize)
        })
        .collect()
}
