use serde::{Deserialize, Serialize};

use super::search::refine;
use super::{
    admissible, check_pair, classify, find_degeneracies, ConeKind, DegeneracyReport, DispersionConfig,
    SearchRegion,
};
use crate::bloch::Polarization;
use crate::error::{Error, Result};
use crate::lattice::{LatticeSpec, ReciprocalSpec, Vec2, BETA_MAX, BETA_MIN};

/// Initial simplex for warm starts (units of |b1|).
const WARM_STEP: f64 = 0.01;
/// A cone this close to one of its symmetry images counts as merged (units of |b1|).
const MERGE_DISTANCE: f64 = 0.05;
const BISECTIONS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Merge,
    Split,
    ClassificationChange,
    Lost,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryEvent {
    pub kind: EventKind,
    pub beta_lo: f64,
    pub beta_hi: f64,
    pub from: Option<ConeKind>,
    pub to: Option<ConeKind>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeTrajectory {
    pub d0: f64,
    pub block: Polarization,
    pub band_pair: [usize; 2],
    pub beta_values: Vec<f64>,
    pub reports: Vec<DegeneracyReport>,
    pub events: Vec<TrajectoryEvent>,
    /// Consecutive samples between which the tilt ratio crosses 1.
    pub type_iii_bracket: Option<(f64, f64)>,
    /// Bisection estimate of the crossing inside the bracket.
    pub type_iii_beta: Option<f64>,
}

fn image_distance(recip: &ReciprocalSpec, k: Vec2) -> f64 {
    [Vec2::new(k.x, -k.y), -k, Vec2::new(-k.x, k.y)]
        .iter()
        .map(|&img| recip.reduce_to_bz(img - k).norm())
        .fold(f64::INFINITY, f64::min)
}

fn pick(found: Vec<DegeneracyReport>, seed: Option<Vec2>, recip: &ReciprocalSpec) -> Option<DegeneracyReport> {
    match seed {
        Some(s) => found.into_iter().min_by(|a, b| {
            let da = recip.reduce_to_bz(a.k_star - s).norm();
            let db = recip.reduce_to_bz(b.k_star - s).norm();
            da.total_cmp(&db)
        }),
        None => found.into_iter().max_by(|a, b| {
            a.k_star.y.total_cmp(&b.k_star.y).then(a.k_star.x.total_cmp(&b.k_star.x))
        }),
    }
}

fn warm(
    spec: &LatticeSpec,
    block: Polarization,
    pair: [usize; 2],
    start: Vec2,
    cfg: &DispersionConfig,
) -> Option<DegeneracyReport> {
    let b = spec.reciprocal().b1.norm();
    let (k, g) = refine(spec, block, pair, start, WARM_STEP * b, cfg);
    (g < cfg.eps_deg && admissible(spec, k, cfg)).then(|| DegeneracyReport {
        k_star: k,
        block,
        band_pair: pair,
        gap_min: g,
        beta: spec.beta,
        d0: spec.d0,
        classification: None,
    })
}

/// Follow one degeneracy through `beta_range`, warm-starting each step from
/// the previous location. Without a tracked cone the whole `region` is
/// searched and the candidate nearest `seed` (or the one with the largest
/// `ky`) is taken.
pub fn tilt_transition_scan(
    d0: f64,
    beta_range: (f64, f64),
    block: Polarization,
    pair: [usize; 2],
    region: Option<SearchRegion>,
    seed: Option<Vec2>,
    cfg: &DispersionConfig,
) -> Result<ConeTrajectory> {
    cfg.validate()?;
    check_pair(block, pair)?;
    let (lo, hi) = beta_range;
    if !(lo <= hi) || lo < BETA_MIN || hi > BETA_MAX {
        return Err(Error::InvalidArgument(format!(
            "beta range [{lo}, {hi}] must be ordered and within [{BETA_MIN}, {BETA_MAX}]"
        )));
    }
    let mut traj = ConeTrajectory {
        d0,
        block,
        band_pair: pair,
        beta_values: Vec::new(),
        reports: Vec::new(),
        events: Vec::new(),
        type_iii_bracket: None,
        type_iii_beta: None,
    };
    let eps = 1e-12;
    let mut beta = lo;
    let mut step = cfg.beta_step;
    let mut prev: Option<DegeneracyReport> = None;
    let mut last_beta: Option<f64> = None;
    while beta <= hi + eps {
        let spec = LatticeSpec::new(d0, beta.min(hi))?;
        let recip = spec.reciprocal();
        let b = recip.b1.norm();
        let found = match &prev {
            Some(p) => warm(&spec, block, pair, p.k_star, cfg),
            None => {
                let region = region.unwrap_or_else(|| SearchRegion::half_bz(&spec));
                let hint = seed.or(traj.reports.last().map(|r| r.k_star));
                pick(find_degeneracies(&spec, block, pair, &region, cfg)?, hint, &recip)
            }
        };
        match (found, &prev) {
            (None, Some(p)) => {
                if step > cfg.beta_step_min * (1.0 + 1e-9) {
                    step /= 2.0;
                    beta = (p.beta + step).min(hi);
                    continue;
                }
                let merged = image_distance(&recip, p.k_star) < MERGE_DISTANCE * b;
                traj.events.push(TrajectoryEvent {
                    kind: if merged { EventKind::Merge } else { EventKind::Lost },
                    beta_lo: p.beta,
                    beta_hi: spec.beta,
                    from: p.kind(),
                    to: None,
                });
                prev = None;
            }
            (None, None) => {}
            (Some(r), _) => {
                let r = classify(&spec, &r, cfg)?;
                match &prev {
                    Some(p) if p.kind() != r.kind() => traj.events.push(TrajectoryEvent {
                        kind: EventKind::ClassificationChange,
                        beta_lo: p.beta,
                        beta_hi: spec.beta,
                        from: p.kind(),
                        to: r.kind(),
                    }),
                    None => {
                        if let Some(lb) = last_beta {
                            traj.events.push(TrajectoryEvent {
                                kind: EventKind::Split,
                                beta_lo: lb,
                                beta_hi: spec.beta,
                                from: None,
                                to: r.kind(),
                            });
                        }
                    }
                    _ => {}
                }
                traj.beta_values.push(spec.beta);
                traj.reports.push(r.clone());
                prev = Some(r);
            }
        }
        last_beta = Some(spec.beta);
        step = cfg.beta_step;
        if beta >= hi - eps {
            break;
        }
        beta = (beta + step).min(hi);
    }
    locate_type_iii(&mut traj, cfg)?;
    Ok(traj)
}

fn is_cone(r: &DegeneracyReport) -> bool {
    r.kind().is_some_and(|k| k.is_dirac())
}

fn locate_type_iii(traj: &mut ConeTrajectory, cfg: &DispersionConfig) -> Result<()> {
    let reports = &traj.reports;
    let Some(i) = (1..reports.len()).find(|&i| {
        let (a, b) = (&reports[i - 1], &reports[i]);
        is_cone(a)
            && is_cone(b)
            && (a.tilt_ratio().unwrap() - 1.0).signum() != (b.tilt_ratio().unwrap() - 1.0).signum()
    }) else {
        return Ok(());
    };
    let (a, b) = (reports[i - 1].clone(), reports[i].clone());
    traj.type_iii_bracket = Some((a.beta, b.beta));
    let below = a.tilt_ratio().unwrap() < 1.0;
    let (mut lo, mut hi) = (a.beta, b.beta);
    let mut k = a.k_star;
    for _ in 0..BISECTIONS {
        let mid = (lo + hi) / 2.0;
        let spec = LatticeSpec::new(traj.d0, mid)?;
        let Some(r) = warm(&spec, traj.block, traj.band_pair, k, cfg) else {
            break;
        };
        let r = classify(&spec, &r, cfg)?;
        k = r.k_star;
        if (r.tilt_ratio().unwrap() < 1.0) == below {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let beta3 = (lo + hi) / 2.0;
    traj.type_iii_beta = Some(beta3);

    // Record the critical cone itself when the regular steps skipped over it.
    let spec = LatticeSpec::new(traj.d0, beta3)?;
    let Some(r) = warm(&spec, traj.block, traj.band_pair, k, cfg) else {
        return Ok(());
    };
    let r = classify(&spec, &r, cfg)?;
    if r.kind() != Some(ConeKind::DiracIII) || a.kind() == r.kind() || b.kind() == r.kind() {
        return Ok(());
    }
    if let Some(pos) = traj.events.iter().position(|e| {
        e.kind == EventKind::ClassificationChange && e.beta_lo == a.beta && e.beta_hi == b.beta
    }) {
        let to = traj.events[pos].to;
        traj.events[pos].beta_hi = beta3;
        traj.events[pos].to = r.kind();
        traj.events.insert(
            pos + 1,
            TrajectoryEvent {
                kind: EventKind::ClassificationChange,
                beta_lo: beta3,
                beta_hi: b.beta,
                from: r.kind(),
                to,
            },
        );
    }
    traj.beta_values.insert(i, beta3);
    traj.reports.insert(i, r);
    Ok(())
}
