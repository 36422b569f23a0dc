use super::lk::Correspondence;
use crate::imgcore::AffineTransform;
use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RansacParams {
    /// Reprojection error (px) below which a correspondence supports a hypothesis.
    pub inlier_threshold: f64,
    pub max_iterations: usize,
    /// Confidence used for the adaptive iteration bound.
    pub confidence: f64,
    pub min_inlier_ratio: f64,
    pub min_correspondences: usize,
    /// Plausibility band for the determinant of the linear part.
    pub det_min: f64,
    pub det_max: f64,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self {
            inlier_threshold: 1.0,
            max_iterations: 500,
            confidence: 0.995,
            min_inlier_ratio: 0.4,
            min_correspondences: 12,
            det_min: 0.8,
            det_max: 1.25,
        }
    }
}

/// Outcome of global motion estimation for one frame pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GmcResult {
    /// Maps previous-frame coordinates to current-frame coordinates. Identity when
    /// `degraded`.
    pub transform: AffineTransform,
    pub correspondences: usize,
    pub inlier_count: usize,
    pub inlier_ratio: f64,
    pub mean_reprojection_error: f64,
    pub degraded: bool,
}

impl GmcResult {
    fn degraded(correspondences: usize, inlier_count: usize, mean_err: f64) -> Self {
        Self {
            transform: AffineTransform::IDENTITY,
            correspondences,
            inlier_count,
            inlier_ratio: if correspondences == 0 {
                0.0
            } else {
                inlier_count as f64 / correspondences as f64
            },
            mean_reprojection_error: mean_err,
            degraded: true,
        }
    }
}

#[inline]
fn reprojection_error(m: &AffineTransform, c: &Correspondence) -> f64 {
    let (x, y) = m.apply(c.p.x, c.p.y);
    ((x - c.qx).powi(2) + (y - c.qy).powi(2)).sqrt()
}

/// Exact affine through three correspondences; `None` for (near-)collinear samples.
fn affine_from_three(c: [&Correspondence; 3]) -> Option<AffineTransform> {
    let m = Matrix3::new(
        c[0].p.x, c[0].p.y, 1.0, //
        c[1].p.x, c[1].p.y, 1.0, //
        c[2].p.x, c[2].p.y, 1.0,
    );
    // twice the triangle area
    if m.determinant().abs() < 1e-3 {
        return None;
    }
    let inv = m.try_inverse()?;
    let sx = inv * Vector3::new(c[0].qx, c[1].qx, c[2].qx);
    let sy = inv * Vector3::new(c[0].qy, c[1].qy, c[2].qy);
    let t = AffineTransform::new(sx[0], sx[1], sy[0], sy[1], sx[2], sy[2]);
    t.is_finite().then_some(t)
}

/// Least-squares affine (normal equations) over `corrs`, minimizing `Σ‖q − Mp‖²`.
/// Coordinates are centred first for conditioning.
pub fn fit_affine_least_squares(corrs: &[&Correspondence]) -> Option<AffineTransform> {
    if corrs.len() < 3 {
        return None;
    }
    let n = corrs.len() as f64;
    let (mx, my) = corrs
        .iter()
        .fold((0.0, 0.0), |(a, b), c| (a + c.p.x, b + c.p.y));
    let (mx, my) = (mx / n, my / n);
    let mut ata = Matrix3::<f64>::zeros();
    let mut atx = Vector3::<f64>::zeros();
    let mut aty = Vector3::<f64>::zeros();
    for c in corrs {
        let row = Vector3::new(c.p.x - mx, c.p.y - my, 1.0);
        ata += row * row.transpose();
        atx += row * c.qx;
        aty += row * c.qy;
    }
    let chol = ata.cholesky()?;
    let sx = chol.solve(&atx);
    let sy = chol.solve(&aty);
    // undo centring: q = A (p − m) + s  =>  b = s − A m
    let t = AffineTransform::new(
        sx[0],
        sx[1],
        sy[0],
        sy[1],
        sx[2] - sx[0] * mx - sx[1] * my,
        sy[2] - sy[0] * mx - sy[1] * my,
    );
    t.is_finite().then_some(t)
}

fn consensus(m: &AffineTransform, corrs: &[Correspondence], threshold: f64) -> (Vec<usize>, f64) {
    let mut idx = Vec::new();
    let mut sse = 0.0;
    for (i, c) in corrs.iter().enumerate() {
        let e = reprojection_error(m, c);
        if e < threshold {
            idx.push(i);
            sse += e * e;
        }
    }
    (idx, sse)
}

/// Iterations needed to draw one all-inlier minimal sample with `confidence`.
fn adaptive_bound(inlier_fraction: f64, confidence: f64, cap: usize) -> usize {
    if inlier_fraction <= 0.0 {
        return cap;
    }
    let p_good = inlier_fraction.powi(3);
    if p_good >= 1.0 {
        return 1;
    }
    let n = (1.0 - confidence).ln() / (1.0 - p_good).ln();
    if !n.is_finite() {
        return cap;
    }
    (n.ceil() as usize).clamp(1, cap)
}

/// RANSAC affine estimation from minimal 3-point samples, followed by a
/// least-squares refit over the consensus set. Never fails: anything that cannot
/// support a trustworthy transform yields an identity result flagged `degraded`.
pub fn estimate_affine_ransac(
    corrs: &[Correspondence],
    params: &RansacParams,
    seed: u64,
) -> GmcResult {
    let n = corrs.len();
    if n < 3 {
        return GmcResult::degraded(n, 0, 0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(Vec<usize>, f64)> = None;
    let mut bound = params.max_iterations.max(1);
    let mut it = 0;
    while it < bound {
        it += 1;
        let i = rng.random_range(0..n);
        let mut j = rng.random_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        let mut k = rng.random_range(0..n - 2);
        let (lo, hi) = (i.min(j), i.max(j));
        if k >= lo {
            k += 1;
        }
        if k >= hi {
            k += 1;
        }
        let Some(h) = affine_from_three([&corrs[i], &corrs[j], &corrs[k]]) else {
            continue;
        };
        let (inl, sse) = consensus(&h, corrs, params.inlier_threshold);
        let better = match &best {
            None => true,
            Some((b, bsse)) => inl.len() > b.len() || (inl.len() == b.len() && sse < *bsse),
        };
        if better {
            bound = bound.min(adaptive_bound(
                inl.len() as f64 / n as f64,
                params.confidence,
                params.max_iterations.max(1),
            ));
            best = Some((inl, sse));
        }
    }

    let Some((mut inliers, _)) = best else {
        return GmcResult::degraded(n, 0, 0.0);
    };
    let mut model = None;
    // refit, re-score, and refit again while the consensus set keeps changing
    for _ in 0..5 {
        let set: Vec<&Correspondence> = inliers.iter().map(|&i| &corrs[i]).collect();
        let Some(m) = fit_affine_least_squares(&set) else {
            break;
        };
        model = Some(m);
        let (next, _) = consensus(&m, corrs, params.inlier_threshold);
        if next == inliers || next.len() < 3 {
            break;
        }
        inliers = next;
    }
    let Some(model) = model else {
        return GmcResult::degraded(n, inliers.len(), 0.0);
    };
    let (inliers, _) = consensus(&model, corrs, params.inlier_threshold);
    let count = inliers.len();
    let mean_err = if count == 0 {
        0.0
    } else {
        inliers
            .iter()
            .map(|&i| reprojection_error(&model, &corrs[i]))
            .sum::<f64>()
            / count as f64
    };
    let ratio = count as f64 / n as f64;
    let det = model.determinant();
    if n < params.min_correspondences
        || ratio < params.min_inlier_ratio
        || !(params.det_min..=params.det_max).contains(&det)
    {
        return GmcResult::degraded(n, count, mean_err);
    }
    GmcResult {
        transform: model,
        correspondences: n,
        inlier_count: count,
        inlier_ratio: ratio,
        mean_reprojection_error: mean_err,
        degraded: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gmc::FeaturePoint;

    fn corr(px: f64, py: f64, qx: f64, qy: f64) -> Correspondence {
        Correspondence {
            p: FeaturePoint {
                x: px,
                y: py,
                score: 1.0,
            },
            qx,
            qy,
            match_error: 0.0,
        }
    }

    fn exact(m: &AffineTransform, n: usize, seed: u64) -> Vec<Correspondence> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let (x, y) = (rng.random_range(0.0..320.0), rng.random_range(0.0..240.0));
                let (qx, qy) = m.apply(x, y);
                corr(x, y, qx, qy)
            })
            .collect()
    }

    #[test]
    fn exact_affine_recovered() {
        let truth = AffineTransform::new(1.01, 0.02, -0.02, 1.01, 3.0, -1.0);
        let r = estimate_affine_ransac(&exact(&truth, 50, 1), &RansacParams::default(), 7);
        assert!(!r.degraded);
        assert!(r.transform.max_abs_diff(&truth) < 1e-6);
        assert_eq!(r.inlier_ratio, 1.0);
    }

    #[test]
    fn identity_correspondences() {
        let r = estimate_affine_ransac(
            &exact(&AffineTransform::IDENTITY, 50, 2),
            &RansacParams::default(),
            7,
        );
        assert!(r.transform.max_abs_diff(&AffineTransform::IDENTITY) < 1e-9);
        assert!(r.mean_reprojection_error < 1e-9);
    }

    #[test]
    fn planted_outliers_excluded() {
        let truth = AffineTransform::new(1.01, 0.02, -0.02, 1.01, 3.0, -1.0);
        let mut corrs = exact(&truth, 70, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        while corrs.len() < 100 {
            let (x, y) = (rng.random_range(0.0..320.0), rng.random_range(0.0..240.0));
            let (qx, qy) = (
                x + rng.random_range(-40.0..40.0),
                y + rng.random_range(-40.0..40.0),
            );
            let (tx, ty) = truth.apply(x, y);
            // an "outlier" that happens to agree with the model is not one
            if ((qx - tx).powi(2) + (qy - ty).powi(2)).sqrt() > 3.0 {
                corrs.push(corr(x, y, qx, qy));
            }
        }
        let r = estimate_affine_ransac(&corrs, &RansacParams::default(), 11);
        assert!(!r.degraded);
        assert!(r.transform.max_abs_diff(&truth) < 1e-3);
        assert_eq!(r.inlier_count, 70);
    }

    #[test]
    fn too_few_correspondences_degrade() {
        let truth = AffineTransform::translation(2.0, 1.0);
        let r = estimate_affine_ransac(&exact(&truth, 2, 1), &RansacParams::default(), 0);
        assert!(r.degraded);
        assert_eq!(r.transform, AffineTransform::IDENTITY);
        // 3 <= n < min_correspondences
        let r = estimate_affine_ransac(&exact(&truth, 8, 1), &RansacParams::default(), 0);
        assert!(r.degraded);
    }

    #[test]
    fn implausible_determinant_degrades() {
        let zoom = AffineTransform::new(1.5, 0.0, 0.0, 1.5, 0.0, 0.0);
        let r = estimate_affine_ransac(&exact(&zoom, 40, 1), &RansacParams::default(), 0);
        assert!(r.degraded);
        assert_eq!(r.transform, AffineTransform::IDENTITY);
    }

    #[test]
    fn same_seed_same_result() {
        let truth = AffineTransform::new(0.99, 0.01, -0.01, 1.0, -2.0, 0.5);
        let mut corrs = exact(&truth, 40, 5);
        corrs.extend((0..20).map(|i| corr(i as f64 * 7.0, 10.0, i as f64 * 7.0 + 25.0, 40.0)));
        let a = estimate_affine_ransac(&corrs, &RansacParams::default(), 99);
        let b = estimate_affine_ransac(&corrs, &RansacParams::default(), 99);
        assert_eq!(a, b);
    }
}
