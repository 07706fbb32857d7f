//! Weighted objective over a [`LossBatch`], with parameter gradients.
//!
//! All scan points of a batch are mapped to canonical space in one parallel
//! pass; the term adjoints are then computed sequentially and pushed back
//! through the recorded tapes in fixed-size chunks that are merged in order,
//! so the result does not depend on the thread count.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::features::PathKind;
use crate::geometry::Vec3;
use crate::grad::{axis_forward_taped, backprop_axis_forward, backprop_inverse, inverse_taped, ParameterGradients};
use crate::losses::{
    distance_term, horizontal_term, normal_pair_term, radius_term, stretch_pair_term, vertical_term,
    winding_pair_term, LossBatch, LossBreakdown, LossWeights,
};
use crate::par;
use crate::transform::ComposedTransform;

/// Positions of each sample group inside the flattened point list.
struct Layout {
    paths: Vec<Range<usize>>,
    normals: usize,
    pairs: usize,
    stretch: usize,
    len: usize,
}

fn gather(batch: &LossBatch) -> (Vec<Vec3>, Layout) {
    let mut pts = Vec::new();
    let mut paths = Vec::with_capacity(batch.paths.len());
    for p in &batch.paths {
        let s = pts.len();
        pts.extend_from_slice(&p.points);
        paths.push(s..pts.len());
    }
    let normals = pts.len();
    for n in &batch.normals {
        pts.push(n.position);
        pts.push(n.position + n.normal * batch.normal_eps);
    }
    let pairs = pts.len();
    for p in &batch.pairs {
        pts.push(p.a);
        pts.push(p.b);
    }
    let stretch = pts.len();
    for s in &batch.stretch {
        pts.push(s.position);
        pts.push(s.position + s.delta);
    }
    let len = pts.len();
    (
        pts,
        Layout {
            paths,
            normals,
            pairs,
            stretch,
            len,
        },
    )
}

/// Term values and the weighted adjoint of every canonical point.
struct TermPass {
    terms: LossBreakdown,
    adj: Vec<Vec3>,
    drho: f64,
    skipped: usize,
}

fn check(term: &'static str, sample: usize, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFiniteLoss { term, sample })
    }
}

fn term_pass(batch: &LossBatch, canon: &[Vec3], lay: &Layout, t: &ComposedTransform, w: &LossWeights) -> Result<TermPass> {
    let sp = &t.spiral;
    let on = &batch.terms;
    let mut adj = vec![Vec3::zeros(); lay.len];
    let mut drho = 0.0;
    let mut terms = LossBreakdown::default();
    let mut skipped = 0usize;

    let count = |k: PathKind| batch.paths.iter().filter(|p| p.kind == k).count();
    let n_surface = count(PathKind::Surface);
    let n_h = count(PathKind::FiberHorizontal);
    let n_v = count(PathKind::FiberVertical);

    for (pi, (path, range)) in batch.paths.iter().zip(&lay.paths).enumerate() {
        let pts = &canon[range.clone()];
        let mut add = |tg: crate::losses::TermGrad, name: &'static str, weight: f64, n: usize, slot: &mut f64| -> Result<()> {
            let v = check(name, pi, tg.value)?;
            let s = 1.0 / n as f64;
            *slot += v * s;
            for (a, g) in adj[range.clone()].iter_mut().zip(&tg.adj) {
                *a += g * (weight * s);
            }
            drho += tg.drho * weight * s;
            Ok(())
        };
        match path.kind {
            PathKind::Surface => {
                if on.radius {
                    add(radius_term(pts, sp), "radius", w.radius, n_surface, &mut terms.radius)?;
                }
                if on.distance {
                    add(distance_term(pts, sp), "distance", w.distance, n_surface, &mut terms.distance)?;
                }
            }
            PathKind::FiberHorizontal => {
                if on.horizontal {
                    add(horizontal_term(pts), "horizontal", w.fiber_direction, n_h, &mut terms.horizontal)?;
                }
            }
            PathKind::FiberVertical => {
                if on.vertical {
                    add(vertical_term(pts, sp), "vertical", w.fiber_direction, n_v, &mut terms.vertical)?;
                }
            }
        }
    }

    if on.normal && !batch.normals.is_empty() {
        let mut vals = Vec::with_capacity(batch.normals.len());
        for i in 0..batch.normals.len() {
            let j = lay.normals + 2 * i;
            match normal_pair_term(&canon[j], &canon[j + 1]) {
                Some(v) => vals.push((i, j, v)),
                None => skipped += 1,
            }
        }
        if !vals.is_empty() {
            let s = 1.0 / vals.len() as f64;
            for (i, j, (v, g0, g1)) in vals {
                terms.normal += check("normal", i, v)? * s;
                adj[j] += g0 * (w.normal * s);
                adj[j + 1] += g1 * (w.normal * s);
            }
        }
    }

    if on.windings && !batch.pairs.is_empty() {
        let mut vals = Vec::with_capacity(batch.pairs.len());
        for (i, p) in batch.pairs.iter().enumerate() {
            let j = lay.pairs + 2 * i;
            match winding_pair_term(&canon[j], &canon[j + 1], p.offset, sp) {
                Some(v) => vals.push((i, j, v)),
                None => skipped += 1,
            }
        }
        if !vals.is_empty() {
            let s = 1.0 / vals.len() as f64;
            for (i, j, (v, ga, gb, dr)) in vals {
                terms.windings += check("windings", i, v)? * s;
                adj[j] += ga * (w.windings * s);
                adj[j + 1] += gb * (w.windings * s);
                drho += dr * w.windings * s;
            }
        }
    }

    if on.stretch && !batch.stretch.is_empty() {
        let s = 1.0 / batch.stretch.len() as f64;
        for i in 0..batch.stretch.len() {
            let j = lay.stretch + 2 * i;
            let (v, g0, g1) = stretch_pair_term(&canon[j], &canon[j + 1]);
            terms.stretch += check("stretch", i, v)? * s;
            adj[j] += g0 * (w.stretch * s);
            adj[j + 1] += g1 * (w.stretch * s);
        }
    }

    Ok(TermPass {
        terms,
        adj,
        drho,
        skipped,
    })
}

/// Result of one objective evaluation.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub total: f64,
    pub terms: LossBreakdown,
    pub grads: ParameterGradients,
    /// Samples dropped because their term was undefined (axis points,
    /// zero-length normal offsets).
    pub skipped: usize,
}

/// Per-term values without gradients.
pub fn evaluate_terms(batch: &LossBatch, t: &ComposedTransform) -> Result<LossBreakdown> {
    let (pts, lay) = gather(batch);
    let canon: Vec<Vec3> = par::map(&pts, |p| t.inverse(p)).into_iter().collect::<Result<_>>()?;
    let mut terms = term_pass(batch, &canon, &lay, t, &LossWeights::default())?.terms;
    if batch.terms.center && !batch.center_z.is_empty() {
        terms.center = crate::losses::loss_center(t, &batch.center_z, batch.center_ref)?;
    }
    Ok(terms)
}

/// Weighted total and its gradient with respect to every transform
/// parameter.
pub fn evaluate_with_gradients(batch: &LossBatch, t: &ComposedTransform, w: &LossWeights) -> Result<Evaluation> {
    let (pts, lay) = gather(batch);
    let tapes = par::map(&pts, |p| inverse_taped(t, p)).into_iter().collect::<Result<Vec<_>>>()?;
    let canon: Vec<Vec3> = tapes.iter().map(|tp| tp.output).collect();
    let pass = term_pass(batch, &canon, &lay, t, w)?;
    let mut terms = pass.terms;

    let mut grads = par::chunked_fold(
        tapes.len(),
        || ParameterGradients::zeros_like(t),
        |g, i| backprop_inverse(t, &tapes[i], pass.adj[i], g),
        |a, b| a.add_assign(&b),
    )
    .unwrap_or_else(|| ParameterGradients::zeros_like(t));
    grads.rho += pass.drho;

    if batch.terms.center && !batch.center_z.is_empty() {
        let axis = par::map(&batch.center_z, |&z| axis_forward_taped(t, z)).into_iter().collect::<Result<Vec<_>>>()?;
        let s = 1.0 / axis.len() as f64;
        let [rx, ry] = batch.center_ref;
        let mut value = 0.0;
        for (i, tp) in axis.iter().enumerate() {
            let (dx, dy) = (tp.output.x - rx, tp.output.y - ry);
            value += check("center", i, dx * dx + dy * dy)? * s;
            let a = Vec3::new(2.0 * dx, 2.0 * dy, 0.0) * (w.center * s);
            backprop_axis_forward(t, tp, a, &mut grads);
        }
        terms.center = value;
    }

    let total = terms.weighted_total(w, &batch.terms);
    if !total.is_finite() {
        return Err(Error::NonFiniteLoss { term: "total", sample: 0 });
    }
    Ok(Evaluation {
        total,
        terms,
        grads,
        skipped: pass.skipped,
    })
}
