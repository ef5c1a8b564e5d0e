//! Trade-off quality metrics on normalized accuracies.
//!
//! * normalized accuracy `a_t = A_t / A_t^expert`,
//! * hypervolume of the region dominated by a front (maximization, reference
//!   point defaults to the origin), exact and Monte-Carlo,
//! * Uniformity `U = 1 − KL(ŝ ‖ uniform)` of the preference-weighted
//!   shortfall distribution `ŝ_t ∝ p_t (1 − a_t)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::types::Preference;

/// Default floor applied to shortfalls before normalization.
pub const DEFAULT_SHORTFALL_FLOOR: f64 = 1e-6;

/// One evaluated preference.
#[derive(Debug, Clone, PartialEq)]
pub struct FrontPoint {
    pub normalized_acc: Vec<f64>,
    pub preference: Preference,
    pub raw_acc: Option<Vec<f64>>,
}

impl FrontPoint {
    pub fn new(normalized_acc: Vec<f64>, preference: Preference, raw_acc: Option<Vec<f64>>) -> Result<Self> {
        if normalized_acc.iter().any(|a| !a.is_finite() || *a < 0.0) {
            return Err(Error::InvalidInput(
                "normalized accuracies must be finite and nonnegative".into(),
            ));
        }
        if preference.len() != normalized_acc.len() {
            return Err(Error::DimMismatch(format!(
                "{} accuracies for a preference over {} tasks",
                normalized_acc.len(),
                preference.len()
            )));
        }
        if let Some(raw) = &raw_acc {
            if raw.len() != normalized_acc.len() {
                return Err(Error::DimMismatch("raw and normalized accuracies differ in length".into()));
            }
        }
        Ok(Self {
            normalized_acc,
            preference,
            raw_acc,
        })
    }

    pub fn dim(&self) -> usize {
        self.normalized_acc.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Front {
    pub points: Vec<FrontPoint>,
    pub reference: Vec<f64>,
}

impl Front {
    pub fn new(points: Vec<FrontPoint>, reference: Vec<f64>) -> Result<Self> {
        if let Some(bad) = points.iter().find(|p| p.dim() != reference.len()) {
            return Err(Error::DimMismatch(format!(
                "point of dimension {} against reference of dimension {}",
                bad.dim(),
                reference.len()
            )));
        }
        Ok(Self { points, reference })
    }

    /// Front with the origin as reference point.
    pub fn with_origin(tasks: usize, points: Vec<FrontPoint>) -> Result<Self> {
        Self::new(points, vec![0.0; tasks])
    }

    pub fn dim(&self) -> usize {
        self.reference.len()
    }

    pub fn coordinates(&self) -> Vec<Vec<f64>> {
        self.points.iter().map(|p| p.normalized_acc.clone()).collect()
    }
}

/// Elementwise `raw / expert`.
pub fn normalized_accuracy(raw: &[f64], expert: &[f64]) -> Result<Vec<f64>> {
    if raw.len() != expert.len() {
        return Err(Error::DimMismatch(format!(
            "{} accuracies for {} experts",
            raw.len(),
            expert.len()
        )));
    }
    if let Some(e) = expert.iter().find(|e| !(e.is_finite() && **e > 0.0)) {
        return Err(Error::InvalidExpert(format!("expert accuracy {e} must be positive")));
    }
    if let Some(r) = raw.iter().find(|r| !(r.is_finite() && **r >= 0.0)) {
        return Err(Error::InvalidInput(format!("accuracy {r} must be nonnegative")));
    }
    Ok(raw.iter().zip(expert).map(|(r, e)| r / e).collect())
}

/// Exact hypervolume of `front` relative to its reference point.
pub fn hypervolume(front: &Front) -> Result<f64> {
    hypervolume_of(&front.coordinates(), &front.reference)
}

/// Exact hypervolume of raw coordinate vectors (maximization).
///
/// Coordinates below the reference are clipped to it. Points are processed
/// in ascending order of their last objective; every limit set then shares
/// that last coordinate, so each exclusive contribution reduces to a slab
/// times a hypervolume in one dimension fewer.
pub fn hypervolume_of(points: &[Vec<f64>], reference: &[f64]) -> Result<f64> {
    let d = reference.len();
    if d == 0 {
        return Err(Error::DimMismatch("reference point is empty".into()));
    }
    let mut shifted = Vec::with_capacity(points.len());
    for p in points {
        if p.len() != d {
            return Err(Error::DimMismatch(format!(
                "point of dimension {} against reference of dimension {d}",
                p.len()
            )));
        }
        if p.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("front contains a non-finite coordinate".into()));
        }
        let q: Vec<f64> = p.iter().zip(reference).map(|(x, r)| (x - r).max(0.0)).collect();
        if q.iter().all(|&x| x > 0.0) {
            shifted.push(q);
        }
    }
    Ok(hv_recursive(shifted, d))
}

fn hv_recursive(points: Vec<Vec<f64>>, d: usize) -> f64 {
    let mut pts = nondominated(points, d);
    match (pts.len(), d) {
        (0, _) => 0.0,
        (1, _) => pts[0][..d].iter().product(),
        (_, 1) => pts.iter().map(|p| p[0]).fold(0.0, f64::max),
        (_, 2) => {
            pts.sort_by(|a, b| b[0].total_cmp(&a[0]));
            let mut area = 0.0;
            let mut top = 0.0;
            for p in &pts {
                if p[1] > top {
                    area += p[0] * (p[1] - top);
                    top = p[1];
                }
            }
            area
        }
        _ => {
            pts.sort_by(|a, b| a[d - 1].total_cmp(&b[d - 1]));
            let mut total = 0.0;
            for k in 0..pts.len() {
                let head = &pts[k];
                let inclusive: f64 = head[..d - 1].iter().product();
                let limit: Vec<Vec<f64>> = pts[k + 1..]
                    .iter()
                    .map(|q| (0..d - 1).map(|i| head[i].min(q[i])).collect())
                    .collect();
                let covered = hv_recursive(limit, d - 1);
                total += head[d - 1] * (inclusive - covered);
            }
            total
        }
    }
}

/// Removes points weakly dominated by another point, keeping one copy of
/// duplicates. Only the first `d` coordinates are compared.
fn nondominated(points: Vec<Vec<f64>>, d: usize) -> Vec<Vec<f64>> {
    let mut keep = vec![true; points.len()];
    for i in 0..points.len() {
        if !keep[i] {
            continue;
        }
        for j in 0..points.len() {
            if i == j || !keep[j] {
                continue;
            }
            let i_covers_j = (0..d).all(|k| points[i][k] >= points[j][k]);
            if i_covers_j {
                keep[j] = false;
            }
        }
    }
    points
        .into_iter()
        .zip(keep)
        .filter_map(|(p, k)| k.then_some(p))
        .collect()
}

/// Monte-Carlo hypervolume estimate and its binomial standard error.
///
/// Samples uniformly in the box spanned by the reference and the
/// coordinatewise maximum of the front.
pub fn hypervolume_mc(front: &Front, samples: usize, seed: u64) -> Result<(f64, f64)> {
    if samples < 1000 {
        return Err(Error::InvalidInput(format!("need at least 1000 samples, got {samples}")));
    }
    let d = front.dim();
    let pts: Vec<Vec<f64>> = front
        .coordinates()
        .into_iter()
        .map(|p| p.iter().zip(&front.reference).map(|(x, r)| x.max(*r)).collect())
        .collect();
    if pts.is_empty() {
        return Ok((0.0, 0.0));
    }
    let upper: Vec<f64> = (0..d)
        .map(|k| pts.iter().map(|p| p[k]).fold(front.reference[k], f64::max))
        .collect();
    let volume: f64 = upper.iter().zip(&front.reference).map(|(u, r)| u - r).product();
    if volume == 0.0 {
        return Ok((0.0, 0.0));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z = vec![0.0; d];
    let mut hits = 0usize;
    for _ in 0..samples {
        for k in 0..d {
            z[k] = front.reference[k] + rng.gen::<f64>() * (upper[k] - front.reference[k]);
        }
        if pts.iter().any(|p| p.iter().zip(&z).all(|(a, b)| a >= b)) {
            hits += 1;
        }
    }
    let frac = hits as f64 / samples as f64;
    let estimate = volume * frac;
    let std_error = volume * (frac * (1.0 - frac) / samples as f64).sqrt();
    Ok((estimate, std_error))
}

/// Uniformity of normalized accuracies `a` under preference `p`.
///
/// Accuracies above one are clipped to one and shortfalls are floored at
/// `floor` so the score stays defined when a task matches its expert.
pub fn uniformity(a: &[f64], p: &Preference, floor: f64) -> Result<f64> {
    if a.len() != p.len() {
        return Err(Error::DimMismatch(format!(
            "{} accuracies for a preference over {} tasks",
            a.len(),
            p.len()
        )));
    }
    if !(floor > 0.0) {
        return Err(Error::InvalidInput("shortfall floor must be positive".into()));
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("accuracies must be finite".into()));
    }
    let weighted: Vec<f64> = a
        .iter()
        .zip(p.weights())
        .map(|(&acc, &w)| w * (1.0 - acc.clamp(0.0, 1.0)).max(floor))
        .collect();
    let total: f64 = weighted.iter().sum();
    let t = a.len() as f64;
    let kl: f64 = weighted
        .iter()
        .map(|&ws| ws / total)
        .filter(|&s| s > 0.0)
        .map(|s| s * (t * s).ln())
        .sum();
    Ok(1.0 - kl)
}

/// Every composition of `resolution` into `tasks` nonnegative parts,
/// divided by `resolution`. Produces `C(resolution + tasks − 1, tasks − 1)`
/// preferences in lexicographic order of the first weight.
pub fn simplex_grid(tasks: usize, resolution: usize) -> Result<Vec<Preference>> {
    if tasks == 0 || resolution == 0 {
        return Err(Error::InvalidInput("tasks and resolution must be at least 1".into()));
    }
    let mut out = Vec::new();
    let mut counts = vec![0usize; tasks];
    compositions(resolution, 0, &mut counts, &mut |c| {
        let w = c.iter().map(|&k| k as f64 / resolution as f64).collect();
        out.push(w);
    });
    out.into_iter().map(Preference::new).collect()
}

fn compositions(remaining: usize, idx: usize, counts: &mut Vec<usize>, emit: &mut impl FnMut(&[usize])) {
    if idx + 1 == counts.len() {
        counts[idx] = remaining;
        emit(counts);
        return;
    }
    for k in 0..=remaining {
        counts[idx] = k;
        compositions(remaining - k, idx + 1, counts, emit);
    }
}

/// Preferences that put `mass` on the tasks in `subset`, spread over their
/// simplex at `resolution`, and split `1 − mass` evenly over the others.
pub fn subset_grid(tasks: usize, subset: &[usize], mass: f64, resolution: usize) -> Result<Vec<Preference>> {
    if !(0.0..=1.0).contains(&mass) {
        return Err(Error::InvalidInput(format!("subset mass {mass} outside [0, 1]")));
    }
    if subset.is_empty() {
        return Err(Error::InvalidInput("subset is empty".into()));
    }
    let mut seen = vec![false; tasks];
    for &i in subset {
        if i >= tasks || seen[i] {
            return Err(Error::InvalidInput(format!("invalid or repeated subset index {i}")));
        }
        seen[i] = true;
    }
    let others = tasks - subset.len();
    if others == 0 && mass != 1.0 {
        return Err(Error::InvalidInput("subset covers every task, mass must be 1".into()));
    }
    let rest = if others == 0 { 0.0 } else { (1.0 - mass) / others as f64 };
    simplex_grid(subset.len(), resolution)?
        .into_iter()
        .map(|local| {
            let mut w = vec![rest; tasks];
            for (&i, &lw) in subset.iter().zip(local.weights()) {
                w[i] = mass * lw;
            }
            Preference::new(w)
        })
        .collect()
}
