use crate::lattice::Vec2;

/// Deterministic Nelder-Mead minimisation in two dimensions.
///
/// Starts from the simplex `x0, x0 + step ex, x0 + step ey` and stops when
/// every vertex is within `tol` of the best one. One restart from the result
/// with a fresh simplex guards against premature collapse.
pub fn nelder_mead<F: FnMut(Vec2) -> f64>(
    mut f: F,
    x0: Vec2,
    step: f64,
    tol: f64,
    max_evals: usize,
) -> (Vec2, f64) {
    let mut evals = 0;
    let (mut x, mut fx) = run(&mut f, x0, step, tol, max_evals, &mut evals);
    let restart = (step * 0.1).max(10.0 * tol);
    let (y, fy) = run(&mut f, x, restart, tol, max_evals, &mut evals);
    if fy <= fx {
        x = y;
        fx = fy;
    }
    (x, fx)
}

fn run<F: FnMut(Vec2) -> f64>(
    f: &mut F,
    x0: Vec2,
    step: f64,
    tol: f64,
    max_evals: usize,
    evals: &mut usize,
) -> (Vec2, f64) {
    let mut eval = |p: Vec2, evals: &mut usize| {
        *evals += 1;
        let v = f(p);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut s = [
        (x0, 0.0),
        (x0 + Vec2::new(step, 0.0), 0.0),
        (x0 + Vec2::new(0.0, step), 0.0),
    ];
    for v in s.iter_mut() {
        v.1 = eval(v.0, evals);
    }
    loop {
        s.sort_by(|a, b| a.1.total_cmp(&b.1));
        let size = (s[1].0 - s[0].0).norm().max((s[2].0 - s[0].0).norm());
        if size < tol || *evals >= max_evals {
            return s[0];
        }
        let centroid = (s[0].0 + s[1].0) / 2.0;
        let worst = s[2];
        let xr = centroid + (centroid - worst.0);
        let fr = eval(xr, evals);
        if fr < s[0].1 {
            let xe = centroid + (centroid - worst.0) * 2.0;
            let fe = eval(xe, evals);
            s[2] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < s[1].1 {
            s[2] = (xr, fr);
        } else {
            let (xc, fc) = if fr < worst.1 {
                let xc = centroid + (xr - centroid) * 0.5;
                (xc, eval(xc, evals))
            } else {
                let xc = centroid + (worst.0 - centroid) * 0.5;
                (xc, eval(xc, evals))
            };
            if fc < worst.1.min(fr) {
                s[2] = (xc, fc);
            } else {
                let best = s[0].0;
                for v in s.iter_mut().skip(1) {
                    v.0 = best + (v.0 - best) * 0.5;
                    v.1 = eval(v.0, evals);
                }
            }
        }
    }
}
