//! Adaptive polylines approximating local unstable curves.

use std::io::Write;

use crate::constants::SolenoidParams;
use crate::solenoid::{circle_delta, unstable_direction, TorusMap, TorusPoint, UNSTABLE_N_ITER};
use crate::{Error, Result};

/// Deepest bisection level allowed when refining one segment.
const MAX_REFINE_DEPTH: usize = 48;

/// Sample cap protecting against runaway refinement.
const MAX_SAMPLES: usize = 5_000_000;

/// Ordered samples along a curve with cumulative arclength.
#[derive(Debug, Clone, PartialEq)]
pub struct UnstableCurve {
    points: Vec<TorusPoint>,
    arclength: Vec<f64>,
}

/// Requested extent of a grown curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Span {
    /// Total arclength.
    Arclength(f64),
    /// A monotone run whose circle coordinate crosses `[lo, hi]`.
    TInterval(f64, f64),
}

impl UnstableCurve {
    pub fn from_points(points: Vec<TorusPoint>) -> Self {
        let mut arclength = Vec::with_capacity(points.len());
        let mut s = 0.0;
        for (i, p) in points.iter().enumerate() {
            if i > 0 {
                s += points[i - 1].distance(p);
            }
            arclength.push(s);
        }
        Self { points, arclength }
    }

    pub fn points(&self) -> &[TorusPoint] {
        &self.points
    }

    pub fn arclength(&self) -> &[f64] {
        &self.arclength
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn total_length(&self) -> f64 {
        self.arclength.last().copied().unwrap_or(0.0)
    }

    pub fn max_gap(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| w[0].distance(&w[1]))
            .fold(0.0, f64::max)
    }

    /// Point at arclength `s` by linear interpolation along the polyline.
    pub fn point_at(&self, s: f64) -> TorusPoint {
        let n = self.points.len();
        if n == 1 || s <= 0.0 {
            return self.points[0];
        }
        if s >= self.total_length() {
            return self.points[n - 1];
        }
        let i = self.arclength.partition_point(|&a| a <= s).clamp(1, n - 1);
        let (s0, s1) = (self.arclength[i - 1], self.arclength[i]);
        let f = if s1 > s0 { (s - s0) / (s1 - s0) } else { 0.0 };
        self.points[i - 1].lerp(&self.points[i], f)
    }

    /// Image under `map`, bisecting segments (at this level) whose image
    /// gap exceeds `eps`.
    pub fn advance<M: TorusMap + ?Sized>(&self, map: &M, eps: f64) -> Result<UnstableCurve> {
        if self.points.len() < 2 {
            return Err(Error::CurveTooCoarse {
                eps,
                reason: "curve has fewer than two samples".into(),
            });
        }
        let mut out = Vec::with_capacity(self.points.len() * 2);
        let mut prev_img = map.apply(&self.points[0])?;
        out.push(prev_img);
        for w in self.points.windows(2) {
            let img = map.apply(&w[1])?;
            refine(map, &w[0], &w[1], &prev_img, &img, eps, 0, &mut out)?;
            out.push(img);
            prev_img = img;
            if out.len() > MAX_SAMPLES {
                return Err(Error::CurveTooCoarse {
                    eps,
                    reason: format!("more than {MAX_SAMPLES} samples"),
                });
            }
        }
        Ok(UnstableCurve::from_points(out))
    }

    /// Prefix of the curve with arclength `len` (the endpoint interpolated).
    pub fn trim_arclength(&self, len: f64) -> UnstableCurve {
        let mut pts: Vec<TorusPoint> = self
            .points
            .iter()
            .zip(&self.arclength)
            .take_while(|(_, &s)| s < len)
            .map(|(p, _)| *p)
            .collect();
        pts.push(self.point_at(len));
        UnstableCurve::from_points(pts)
    }

    /// Continuous lift of the circle coordinate along the samples.
    pub fn unwrapped_t(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.points.len());
        let mut acc = self.points.first().map_or(0.0, |p| p.t());
        for (i, p) in self.points.iter().enumerate() {
            if i > 0 {
                acc += circle_delta(self.points[i - 1].t(), p.t());
            }
            out.push(acc);
        }
        out
    }

    /// First monotone run with circle coordinate crossing `[lo, hi]`, cut at
    /// both ends by linear interpolation.
    pub fn trim_t_interval(&self, lo: f64, hi: f64) -> Option<UnstableCurve> {
        let tu = self.unwrapped_t();
        let n = tu.len();
        let first = tu[0];
        // Smallest lift of lo not below the start of the curve.
        let k = (first - lo).ceil();
        let (a, b) = (lo + k, hi + k);
        if tu.iter().any(|w| !w.is_finite()) {
            return None;
        }
        let ia = (1..n).find(|&i| tu[i - 1] <= a && a <= tu[i])?;
        let ib = (ia..n).find(|&i| tu[i - 1] <= b && b <= tu[i])?;
        if (ia..ib).any(|i| tu[i] < tu[i - 1]) {
            return None;
        }
        let cut = |i: usize, target: f64| {
            let f = if tu[i] > tu[i - 1] {
                (target - tu[i - 1]) / (tu[i] - tu[i - 1])
            } else {
                0.0
            };
            self.points[i - 1].lerp(&self.points[i], f)
        };
        let mut pts = vec![cut(ia, a)];
        pts.extend_from_slice(&self.points[ia..ib]);
        pts.push(cut(ib, b));
        Some(UnstableCurve::from_points(pts))
    }

    /// Writes the CSV `s,t,x,y`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "s,t,x,y")?;
        for (p, s) in self.points.iter().zip(&self.arclength) {
            writeln!(w, "{s:.17e},{:.17e},{:.17e},{:.17e}", p.t(), p.x(), p.y())?;
        }
        Ok(())
    }
}

#[allow(clippy::too_many_arguments)]
fn refine<M: TorusMap + ?Sized>(
    map: &M,
    a: &TorusPoint,
    b: &TorusPoint,
    fa: &TorusPoint,
    fb: &TorusPoint,
    eps: f64,
    depth: usize,
    out: &mut Vec<TorusPoint>,
) -> Result<()> {
    if fa.distance(fb) <= eps {
        return Ok(());
    }
    if depth >= MAX_REFINE_DEPTH || a.distance(b) < 1e-15 {
        return Err(Error::CurveTooCoarse {
            eps,
            reason: format!(
                "image gap {:e} persists after {depth} bisections",
                fa.distance(fb)
            ),
        });
    }
    let mid = a.lerp(b, 0.5);
    let fm = map.apply(&mid)?;
    refine(map, a, &mid, fa, &fm, eps, depth + 1, out)?;
    out.push(fm);
    refine(map, &mid, b, &fm, fb, eps, depth + 1, out)
}

/// Short segment through `seed` along the unstable direction of `F`.
pub fn seed_segment(
    seed: &TorusPoint,
    s: &SolenoidParams,
    half_length: f64,
) -> Result<UnstableCurve> {
    let v = unstable_direction(seed, s, UNSTABLE_N_ITER)?;
    Ok(UnstableCurve::from_points(vec![
        seed.offset(&v, -half_length),
        *seed,
        seed.offset(&v, half_length),
    ]))
}

/// Iterates a short unstable segment through `seed` forward under `map`
/// until it covers `span`, keeping adjacent samples within `eps`.
pub fn grow_unstable_curve<M: TorusMap + ?Sized>(
    seed: &TorusPoint,
    s: &SolenoidParams,
    span: Span,
    eps: f64,
    map: &M,
    max_iter: usize,
) -> Result<UnstableCurve> {
    let mut curve = seed_segment(seed, s, 0.25 * eps)?;
    for _ in 0..=max_iter {
        match span {
            Span::Arclength(len) if curve.total_length() >= len => {
                return Ok(curve.trim_arclength(len))
            }
            Span::TInterval(lo, hi) => {
                if let Some(c) = curve.trim_t_interval(lo, hi) {
                    return Ok(c);
                }
            }
            _ => {}
        }
        curve = curve.advance(map, eps)?;
    }
    Err(Error::FailedToSpan {
        iterations: max_iter,
    })
}
