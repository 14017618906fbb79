//! Geweke joint-distribution tests: prior draws against a chain that
//! alternates one Gibbs sweep with a fresh draw of the data.

use sparsepanel_core::distributions::{sample_beta, sample_normal, InverseGammaSpec};
use sparsepanel_core::m1::{M1Config, M1Hyper, M1Params, M1Sampler, M1Variant};
use sparsepanel_core::m2::{M2Config, M2Hyper, M2Params, M2Sampler, M2Variant};
use sparsepanel_core::panel::{simulate_m1, simulate_m2, M1UnitTruth, M2UnitTruth, Regressors};
use sparsepanel_core::rand::Rng;
use sparsepanel_core::RngStream;

use super::stats::{batch_se, mean, var};

pub struct GewekeResult {
    pub names: Vec<String>,
    pub z: Vec<f64>,
}

impl GewekeResult {
    pub fn frac_within(&self, c: f64) -> f64 {
        self.z.iter().filter(|z| z.abs() <= c).count() as f64 / self.z.len() as f64
    }
}

fn compare(names: Vec<String>, mc: &[Vec<f64>], sc: &[Vec<f64>]) -> GewekeResult {
    let z = (0..names.len())
        .map(|j| {
            let a: Vec<f64> = mc.iter().map(|g| g[j]).collect();
            let b: Vec<f64> = sc.iter().map(|g| g[j]).collect();
            let se2 = var(&a) / a.len() as f64 + batch_se(&b, 100).powi(2);
            (mean(&a) - mean(&b)) / se2.sqrt()
        })
        .collect();
    GewekeResult { names, z }
}

fn bern(p: f64, rng: &mut RngStream) -> bool {
    rng.random::<f64>() < p
}

fn m1_prior(h: &M1Hyper, n: usize, rng: &mut RngStream) -> (M1Params, M1UnitTruth) {
    let p = M1Params {
        alpha: sample_normal(h.mu_alpha, h.v_alpha.sqrt(), rng),
        rho: sample_normal(h.mu_rho, h.v_rho.sqrt(), rng),
        sigma2: h.sigma2.sample(rng),
        q_alpha: sample_beta(h.q_alpha.a, h.q_alpha.b, rng).unwrap(),
        q_rho: sample_beta(h.q_rho.a, h.q_rho.b, rng).unwrap(),
        q_sigma: 0.0,
        v_delta_alpha: h.v_delta_alpha.sample(rng),
        v_delta_rho: h.v_delta_rho.sample(rng),
        v_delta_sigma: 1.0,
    };
    let mut u = M1UnitTruth {
        z_alpha: vec![],
        delta_alpha: vec![],
        z_rho: vec![],
        delta_rho: vec![],
        z_sigma: vec![false; n],
        delta_sigma: vec![1.0; n],
    };
    for _ in 0..n {
        let za = bern(p.q_alpha, rng);
        u.z_alpha.push(za);
        u.delta_alpha.push(if za { sample_normal(0.0, p.v_delta_alpha.sqrt(), rng) } else { 0.0 });
        let zr = bern(p.q_rho, rng);
        u.z_rho.push(zr);
        u.delta_rho.push(if zr { sample_normal(0.0, p.v_delta_rho.sqrt(), rng) } else { 0.0 });
    }
    (p, u)
}

fn m1_data(p: &M1Params, u: &M1UnitTruth, t: usize, rng: &mut RngStream) -> Vec<Vec<f64>> {
    (0..u.z_alpha.len())
        .map(|i| {
            let mut y = vec![0.0];
            for s in 1..=t {
                let prev = y[s - 1];
                y.push(p.alpha + u.delta_alpha[i] + (p.rho + u.delta_rho[i]) * prev + sample_normal(0.0, p.sigma2.sqrt(), rng));
            }
            y
        })
        .collect()
}

fn m1_stats(p: &M1Params, u: &M1UnitTruth) -> Vec<f64> {
    let n = u.z_alpha.len() as f64;
    let frac = |z: &[bool]| z.iter().filter(|&&b| b).count() as f64 / n;
    vec![
        p.alpha,
        p.rho,
        p.sigma2.ln(),
        p.q_alpha,
        p.q_rho,
        p.v_delta_alpha.ln(),
        p.v_delta_rho.ln(),
        p.alpha * p.alpha,
        p.rho * p.rho,
        p.alpha * p.rho,
        frac(&u.z_alpha),
        frac(&u.z_rho),
        u.delta_alpha[0],
        u.delta_rho[0],
        u.delta_alpha[0].powi(2),
        u.delta_rho[0].powi(2),
        u.delta_alpha[1] * u.delta_rho[1],
        p.q_alpha * p.q_rho,
        p.alpha + u.delta_alpha[2],
        p.rho + u.delta_rho[2],
    ]
}

const M1_NAMES: [&str; 20] = [
    "alpha", "rho", "ln_sigma2", "q_alpha", "q_rho", "ln_v_delta_alpha", "ln_v_delta_rho", "alpha^2", "rho^2",
    "alpha*rho", "mean_z_alpha", "mean_z_rho", "delta_alpha_0", "delta_rho_0", "delta_alpha_0^2", "delta_rho_0^2",
    "delta_alpha_1*delta_rho_1", "q_alpha*q_rho", "alpha_2", "rho_2",
];

/// Homoskedastic spike-and-slab M1 at N units and T periods.
pub fn geweke_m1(n: usize, t: usize, draws: usize, seed: u64) -> GewekeResult {
    let h = M1Hyper::default();
    let mut rng = RngStream::new(seed, 0);
    let mc: Vec<Vec<f64>> = (0..draws)
        .map(|_| {
            let (p, u) = m1_prior(&h, n, &mut rng);
            m1_stats(&p, &u)
        })
        .collect();

    let mut rng = RngStream::new(seed, 1);
    let (data, _) = simulate_m1(&M1Params::table1(), n, t, &mut rng).unwrap();
    let mut cfg = M1Config::new(M1Variant::SsHomosk, 1, 0, seed);
    cfg.hyper = h;
    let mut s = M1Sampler::new(&data, &cfg).unwrap();
    let (p, u) = m1_prior(&h, n, &mut rng);
    s.set_params(p);
    s.set_unit_state(&u);
    for (i, y) in m1_data(&p, &u, t, &mut rng).iter().enumerate() {
        s.set_observations(i, y);
    }
    let mut sc = Vec::with_capacity(draws);
    for _ in 0..draws {
        s.sweep().unwrap();
        let p = *s.params();
        let u = s.unit_state();
        for (i, y) in m1_data(&p, &u, t, &mut rng).iter().enumerate() {
            s.set_observations(i, y);
        }
        sc.push(m1_stats(&p, &u));
    }
    compare(M1_NAMES.iter().map(|s| s.to_string()).collect(), &mc, &sc)
}

pub fn m2_prior(h: &M2Hyper, n: usize, t: usize, rng: &mut RngStream) -> (M2Params, M2UnitTruth) {
    let slab_scale = |v: f64, rng: &mut RngStream| InverseGammaSpec::from_variance(v).unwrap().sample(rng);
    let p = M2Params {
        alpha: vec![sample_normal(h.mu_alpha[0], h.v_alpha[0].sqrt(), rng)],
        rho: sample_normal(h.mu_rho, h.v_rho.sqrt(), rng),
        sigma2_u: (0..t).map(|_| h.sigma2_u.sample(rng)).collect(),
        sigma2_eps: (0..t).map(|_| h.sigma2_eps.sample(rng)).collect(),
        q_alpha: sample_beta(h.q_alpha.a, h.q_alpha.b, rng).unwrap(),
        q_rho: sample_beta(h.q_rho.a, h.q_rho.b, rng).unwrap(),
        q_sigma_u: sample_beta(h.q_sigma_u.a, h.q_sigma_u.b, rng).unwrap(),
        q_sigma_eps: sample_beta(h.q_sigma_eps.a, h.q_sigma_eps.b, rng).unwrap(),
        v_delta_alpha: h.v_delta_alpha_spec().sample(rng).unwrap().iter().cloned().collect(),
        v_delta_rho: h.v_delta_rho.sample(rng),
        v_delta_sigma_u: h.v_delta_sigma_u.sample(rng),
        v_delta_sigma_eps: h.v_delta_sigma_eps.sample(rng),
        mu_s0: sample_normal(h.mu_s0_mean, h.mu_s0_var.sqrt(), rng),
        v_s0: h.v_s0.sample(rng),
    };
    let mut u = M2UnitTruth {
        z_alpha: vec![],
        delta_alpha: vec![],
        z_rho: vec![],
        delta_rho: vec![],
        z_sigma_u: vec![],
        delta_sigma_u: vec![],
        z_sigma_eps: vec![],
        delta_sigma_eps: vec![],
        states: vec![],
    };
    for _ in 0..n {
        let za = bern(p.q_alpha, rng);
        u.z_alpha.push(za);
        u.delta_alpha.push(vec![if za { sample_normal(0.0, p.v_delta_alpha[0].sqrt(), rng) } else { 0.0 }]);
        let zr = bern(p.q_rho, rng);
        let dr = if zr { sample_normal(0.0, p.v_delta_rho.sqrt(), rng) } else { 0.0 };
        u.z_rho.push(zr);
        u.delta_rho.push(dr);
        let zu = bern(p.q_sigma_u, rng);
        u.z_sigma_u.push(zu);
        u.delta_sigma_u.push(if zu { slab_scale(p.v_delta_sigma_u, rng) } else { 1.0 });
        let ze = bern(p.q_sigma_eps, rng);
        let de = if ze { slab_scale(p.v_delta_sigma_eps, rng) } else { 1.0 };
        u.z_sigma_eps.push(ze);
        u.delta_sigma_eps.push(de);
        let mut s = vec![sample_normal(p.mu_s0, p.v_s0.sqrt(), rng)];
        for g in 0..t {
            let prev = s[g];
            s.push((p.rho + dr) * prev + sample_normal(0.0, (p.sigma2_eps[g] * de).sqrt(), rng));
        }
        u.states.push(s);
    }
    (p, u)
}

fn m2_data(p: &M2Params, u: &M2UnitTruth, rng: &mut RngStream) -> Vec<Vec<f64>> {
    let t = p.sigma2_u.len();
    (0..u.z_alpha.len())
        .map(|i| {
            (0..t)
                .map(|g| {
                    p.alpha[0] + u.delta_alpha[i][0] + u.states[i][g + 1]
                        + sample_normal(0.0, (p.sigma2_u[g] * u.delta_sigma_u[i]).sqrt(), rng)
                })
                .collect()
        })
        .collect()
}

fn m2_stats(p: &M2Params, u: &M2UnitTruth) -> Vec<f64> {
    let n = u.z_alpha.len() as f64;
    let frac = |z: &[bool]| z.iter().filter(|&&b| b).count() as f64 / n;
    let mut g = vec![
        p.alpha[0],
        p.rho,
        p.alpha[0] * p.alpha[0],
        p.rho * p.rho,
        p.q_alpha,
        p.q_rho,
        p.q_sigma_u,
        p.q_sigma_eps,
        p.v_delta_alpha[0].ln(),
        p.v_delta_rho.ln(),
        p.v_delta_sigma_u.ln(),
        p.v_delta_sigma_eps.ln(),
        p.mu_s0,
        p.v_s0.ln(),
        frac(&u.z_alpha),
        frac(&u.z_rho),
        frac(&u.z_sigma_u),
        frac(&u.z_sigma_eps),
        u.delta_alpha[0][0],
        u.delta_rho[0],
        u.delta_sigma_u[0].ln(),
        u.delta_sigma_eps[0].ln(),
    ];
    g.extend(p.sigma2_u.iter().map(|v| v.ln()));
    g.extend(p.sigma2_eps.iter().map(|v| v.ln()));
    g.extend(u.states[0].iter().copied());
    g.push(u.states[1][1] * u.states[1][2]);
    g
}

fn m2_names(t: usize) -> Vec<String> {
    let mut names: Vec<String> = [
        "alpha", "rho", "alpha^2", "rho^2", "q_alpha", "q_rho", "q_sigma_u", "q_sigma_eps", "ln_v_delta_alpha",
        "ln_v_delta_rho", "ln_v_delta_sigma_u", "ln_v_delta_sigma_eps", "mu_s0", "ln_v_s0", "mean_z_alpha",
        "mean_z_rho", "mean_z_sigma_u", "mean_z_sigma_eps", "delta_alpha_0", "delta_rho_0", "ln_delta_sigma_u_0",
        "ln_delta_sigma_eps_0",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    names.extend((0..t).map(|g| format!("ln_sigma2_u_{g}")));
    names.extend((0..t).map(|g| format!("ln_sigma2_eps_{g}")));
    names.extend((0..=t).map(|g| format!("s_0_{g}")));
    names.push("s_1_1*s_1_2".into());
    names
}

/// Baseline M2 with an intercept only, N units and T periods.
pub fn geweke_m2(n: usize, t: usize, draws: usize, seed: u64) -> GewekeResult {
    let h = M2Hyper::table4(1);
    let mut rng = RngStream::new(seed, 0);
    let mc: Vec<Vec<f64>> = (0..draws)
        .map(|_| {
            let (p, u) = m2_prior(&h, n, t, &mut rng);
            m2_stats(&p, &u)
        })
        .collect();

    let mut rng = RngStream::new(seed, 1);
    let (data, _) = simulate_m2(&M2Params::table4_prior_means(1, t), n, t, &Regressors::Intercept, &mut rng).unwrap();
    let mut cfg = M2Config::new(M2Variant::Baseline, 1, 1, 0, seed);
    cfg.hyper = h.clone();
    let mut s = M2Sampler::new(&data, &cfg).unwrap();
    {
        let (a, b) = s.rwmh_states_mut();
        a.adapting = false;
        b.adapting = false;
    }
    let (p, u) = m2_prior(&h, n, t, &mut rng);
    let y = m2_data(&p, &u, &mut rng);
    s.set_params(p);
    s.set_unit_state(&u);
    for (i, yi) in y.iter().enumerate() {
        s.set_observations(i, yi);
    }
    let mut sc = Vec::with_capacity(draws);
    for _ in 0..draws {
        s.sweep().unwrap();
        let p = s.params().clone();
        let u = s.unit_state();
        for (i, yi) in m2_data(&p, &u, &mut rng).iter().enumerate() {
            s.set_observations(i, yi);
        }
        sc.push(m2_stats(&p, &u));
    }
    compare(m2_names(t), &mc, &sc)
}
