use super::{dotc, norm2, CMatrix, DenseLu, Factorization, C64};

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

const THETA13: f64 = 5.371920351148152;

/// Matrix exponential by scaling and squaring with the degree-13 Padé
/// approximant (Higham 2005).
pub fn expm(a: &CMatrix) -> CMatrix {
    assert!(a.is_square());
    let n = a.rows();
    if n == 0 {
        return a.clone();
    }
    let norm = a.norm_one();
    let s = if norm > THETA13 { (norm / THETA13).log2().ceil() as i32 } else { 0 };
    let a = a.scaled(C64::new(2f64.powi(-s), 0.0));
    let ident = CMatrix::identity(n);
    let a2 = a.matmul(&a);
    let a4 = a2.matmul(&a2);
    let a6 = a4.matmul(&a2);
    let b = |k: usize| C64::new(PADE13[k], 0.0);
    let lin = |m: &[(&CMatrix, usize)]| {
        let mut out = CMatrix::zeros(n, n);
        for (mat, k) in m {
            out = out.add(&mat.scaled(b(*k)));
        }
        out
    };
    let u_inner = a6.matmul(&lin(&[(&a6, 13), (&a4, 11), (&a2, 9)]));
    let u = a.matmul(&u_inner.add(&lin(&[(&a6, 7), (&a4, 5), (&a2, 3), (&ident, 1)])));
    let v_inner = a6.matmul(&lin(&[(&a6, 12), (&a4, 10), (&a2, 8)]));
    let v = v_inner.add(&lin(&[(&a6, 6), (&a4, 4), (&a2, 2), (&ident, 0)]));
    let p = v.add(&u);
    let q = v.sub(&u);
    let lu = DenseLu::new(&q);
    let mut r = CMatrix::zeros(n, n);
    for j in 0..n {
        let col = lu.solve(&p.column(j));
        r.set_column(j, &col);
    }
    for _ in 0..s {
        r = r.matmul(&r);
    }
    r
}

#[derive(Clone, Copy, Debug)]
pub struct KrylovExpmOptions {
    /// Krylov subspace dimension per substep.
    pub krylov_dim: usize,
    /// Relative accuracy target for the accumulated local error.
    pub tol: f64,
    /// Hard cap on substeps.
    pub max_steps: usize,
}

impl Default for KrylovExpmOptions {
    fn default() -> Self {
        KrylovExpmOptions { krylov_dim: 30, tol: 1e-10, max_steps: 10_000 }
    }
}

/// Action `exp(t A) v` for an operator known only through `apply`.
///
/// Arnoldi substepping with the classical error estimate
/// `beta * h_{m+1,m} * |e_m^T exp(tau H_m) e_1|`; the step is halved until the
/// estimate meets `tol * tau / t` of the initial norm.
pub fn expm_krylov_action(
    apply: &dyn Fn(&[C64]) -> Vec<C64>,
    v: &[C64],
    t: f64,
    opts: KrylovExpmOptions,
) -> crate::Result<Vec<C64>> {
    let n = v.len();
    let mut w = v.to_vec();
    let beta0 = norm2(v);
    if beta0 == 0.0 || t == 0.0 {
        return Ok(w);
    }
    let m_max = opts.krylov_dim.min(n).max(1);
    let mut t_now = 0.0;
    let mut tau_guess = t;
    let mut steps = 0;
    while t_now < t {
        steps += 1;
        if steps > opts.max_steps {
            return Err(crate::Error::solver("Krylov exponential exceeded its step budget"));
        }
        let beta = norm2(&w);
        if beta == 0.0 {
            break;
        }
        let mut basis: Vec<Vec<C64>> = vec![w.iter().map(|z| z / beta).collect()];
        let mut h = CMatrix::zeros(m_max + 1, m_max);
        let mut m = m_max;
        let mut breakdown = false;
        for j in 0..m_max {
            let mut u = apply(&basis[j]);
            // modified Gram-Schmidt with one reorthogonalization pass
            for _ in 0..2 {
                for (i, q) in basis.iter().enumerate() {
                    let c = dotc(q, &u);
                    h[(i, j)] += c;
                    super::axpy(-c, q, &mut u);
                }
            }
            let hn = norm2(&u);
            h[(j + 1, j)] = C64::new(hn, 0.0);
            if hn <= 1e-14 * beta.max(1.0) * (1.0 + h.norm_fro()) {
                m = j + 1;
                breakdown = true;
                break;
            }
            basis.push(u.into_iter().map(|z| z / hn).collect());
        }
        let hm = CMatrix::from_fn(m, m, |i, j| h[(i, j)]);
        let h_next = h[(m, m - 1)].re;
        let remaining = t - t_now;
        let mut tau = tau_guess.min(remaining);
        let (f, err) = loop {
            let f = expm(&hm.scaled(C64::new(tau, 0.0)));
            let err = if breakdown { 0.0 } else { beta * h_next * f[(m - 1, 0)].norm() };
            if err <= opts.tol * beta0 * (tau / t).max(1e-3) || tau < 1e-12 * t {
                break (f, err);
            }
            tau *= 0.5;
        };
        let mut next = vec![C64::new(0.0, 0.0); n];
        for (i, q) in basis.iter().take(m).enumerate() {
            super::axpy(f[(i, 0)] * beta, q, &mut next);
        }
        w = next;
        t_now += tau;
        tau_guess = if err < 0.1 * opts.tol * beta0 { tau * 2.0 } else { tau };
    }
    Ok(w)
}
