//! Derivative-free optimizers: a Nelder-Mead simplex search used for MSMD
//! fitting and a golden-section line search used by the truncation
//! calibration.

/// Nelder-Mead configuration. Convergence is declared when the objective
/// spread over the simplex falls below `ftol`.
#[derive(Debug, Clone)]
pub struct NelderMead {
    pub ftol: f64,
    pub max_evals: usize,
    pub initial_step: f64,
}

impl Default for NelderMead {
    fn default() -> Self {
        Self {
            ftol: 1e-6,
            max_evals: 0, // 0 => 500 * dim
            initial_step: 0.5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NmResult {
    pub x: Vec<f64>,
    pub fx: f64,
    pub evals: usize,
    pub converged: bool,
}

impl NelderMead {
    pub fn minimize<F: FnMut(&[f64]) -> f64>(&self, mut f: F, x0: &[f64]) -> NmResult {
        let dim = x0.len();
        let max_evals = if self.max_evals == 0 {
            500 * dim
        } else {
            self.max_evals
        };
        let mut evals = 0usize;
        let mut eval = |x: &[f64], evals: &mut usize| -> f64 {
            *evals += 1;
            let v = f(x);
            if v.is_nan() {
                f64::INFINITY
            } else {
                v
            }
        };

        let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(dim + 1);
        simplex.push(x0.to_vec());
        for i in 0..dim {
            let mut v = x0.to_vec();
            v[i] += self.initial_step;
            simplex.push(v);
        }
        let mut fvals: Vec<f64> = simplex.iter().map(|v| eval(v, &mut evals)).collect();

        let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
        let mut converged = false;

        loop {
            let mut order: Vec<usize> = (0..=dim).collect();
            order.sort_by(|&a, &b| fvals[a].partial_cmp(&fvals[b]).unwrap());
            let best = order[0];
            let worst = order[dim];
            let second_worst = order[dim - 1];

            if fvals[worst] - fvals[best] < self.ftol {
                converged = true;
                break;
            }
            if evals >= max_evals {
                break;
            }

            // Centroid of all but the worst vertex.
            let mut centroid = vec![0.0; dim];
            for &i in order.iter().take(dim) {
                for (c, x) in centroid.iter_mut().zip(&simplex[i]) {
                    *c += x / dim as f64;
                }
            }

            let reflect: Vec<f64> = centroid
                .iter()
                .zip(&simplex[worst])
                .map(|(c, w)| c + alpha * (c - w))
                .collect();
            let f_reflect = eval(&reflect, &mut evals);

            if f_reflect < fvals[best] {
                let expand: Vec<f64> = centroid
                    .iter()
                    .zip(&simplex[worst])
                    .map(|(c, w)| c + gamma * (c - w))
                    .collect();
                let f_expand = eval(&expand, &mut evals);
                if f_expand < f_reflect {
                    simplex[worst] = expand;
                    fvals[worst] = f_expand;
                } else {
                    simplex[worst] = reflect;
                    fvals[worst] = f_reflect;
                }
            } else if f_reflect < fvals[second_worst] {
                simplex[worst] = reflect;
                fvals[worst] = f_reflect;
            } else {
                let contract: Vec<f64> = if f_reflect < fvals[worst] {
                    centroid
                        .iter()
                        .zip(&reflect)
                        .map(|(c, r)| c + rho * (r - c))
                        .collect()
                } else {
                    centroid
                        .iter()
                        .zip(&simplex[worst])
                        .map(|(c, w)| c + rho * (w - c))
                        .collect()
                };
                let f_contract = eval(&contract, &mut evals);
                if f_contract < fvals[worst].min(f_reflect) {
                    simplex[worst] = contract;
                    fvals[worst] = f_contract;
                } else {
                    // Shrink toward the best vertex.
                    let best_point = simplex[best].clone();
                    for i in 0..=dim {
                        if i == best {
                            continue;
                        }
                        for (x, b) in simplex[i].iter_mut().zip(&best_point) {
                            *x = b + sigma * (*x - b);
                        }
                        fvals[i] = eval(&simplex[i].clone(), &mut evals);
                    }
                }
            }
        }

        let mut best = 0usize;
        for i in 1..=dim {
            if fvals[i] < fvals[best] {
                best = i;
            }
        }
        NmResult {
            x: simplex[best].clone(),
            fx: fvals[best],
            evals,
            converged,
        }
    }
}

/// Golden-section minimization of a unimodal function on [a, b].
pub fn golden_section<F: Fn(f64) -> f64>(
    f: F,
    mut a: f64,
    mut b: f64,
    rel_tol: f64,
    max_iter: usize,
) -> (f64, f64) {
    let inv_phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..max_iter {
        if (b - a).abs() <= rel_tol * (a.abs() + b.abs()) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}
