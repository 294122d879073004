use std::path::Path;

use depinning::full::{FullModel, KernelKind};
use depinning::lattice::{Disorder, ModelParams};
use depinning::oracle::{brute_threshold, correspondence_check, BRUTE_CAP, DEFAULT_BOUND};
use depinning::properties::{self, TOL};
use depinning::registry::{t2t_engines, threshold_engines, EngineOptions};
use depinning::stats::{
    bessel_k0, bessel_k1, bridge_covariance, estimate_flat_scaling, k0_cdf, k0_density, linear_fit, loglog_slope,
    mean_se, p_u_cdf, p_u_density, p_u_mass, phi, polar_covariance, strain_bridge_check, test_d_uniform,
    test_exchangeability, test_s_clt, variance_se, Check, EmpiricalDistribution, TestReport,
};
use depinning::toy::{
    defect_spacing, negative_threshold, observables_at, positive_threshold, toy_jump, z_of, AvalancheEvent, ToyConfig,
};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::{Model, RunConfig};
use crate::output::{float, num, write_json, CsvSink};
use crate::CliError;

/// Threshold force recomputed from `m⁺` must match to this accuracy.
const FORCE_CHECK_TOL: f64 = 1e-9;

fn options(cfg: &RunConfig) -> EngineOptions {
    let kernel = if cfg.truncated_kernel { KernelKind::Truncated } else { KernelKind::Exact };
    EngineOptions { kernel, ..EngineOptions::default() }
}

fn announce(path: &Path) {
    println!("wrote {}", path.display());
}

struct ThresholdRecord {
    realization: u64,
    s: i64,
    k_plus: usize,
    k_minus: usize,
    spacing: usize,
    f_th: f64,
    f_check: f64,
    alpha: Vec<f64>,
    m_plus: Vec<i64>,
    m_minus: Vec<i64>,
    coord_plus: Vec<f64>,
    brute_match: Option<bool>,
    toy_full_match: Option<bool>,
}

pub fn threshold(cfg: &RunConfig, command: &str) -> Result<bool, CliError> {
    let engines = threshold_engines();
    let engine = engines.get(&cfg.engine)?;
    let opts = options(cfg);
    let prov = cfg.provenance(command);
    let coord_name = match cfg.model {
        Model::Toy => "z_plus",
        Model::Full => "ytilde_plus",
    };
    let mut summary = CsvSink::create(
        &cfg.out,
        "threshold_summary.csv",
        &prov,
        &["L", "realization", "S", "k_plus", "k_minus", "d", "f_th", "f_th_check"],
    )?;
    let mut sites = CsvSink::create(
        &cfg.out,
        "threshold_sites.csv",
        &prov,
        &["L", "realization", "site", "alpha", "m_plus", "m_minus", coord_name],
    )?;
    let mut per_len = Vec::new();
    let mut ok = true;

    for &len in &cfg.lens {
        let params = ModelParams::new(len, cfg.lambda)?;
        let records = (0..cfg.n as u64)
            .into_par_iter()
            .map(|r| -> Result<ThresholdRecord, CliError> {
                let d = Disorder::realization(cfg.seed, r, len)?;
                let pair = engine.compute(&d, &params, &opts)?;
                let plus = positive_threshold(&d)?;
                let minus = negative_threshold(&d)?;
                let (coord_plus, f_check) = match cfg.model {
                    Model::Toy => {
                        let z = z_of(&pair.m_plus, &d)?;
                        let zmax = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                        (z, cfg.lambda * (0.5 - params.eta * zmax))
                    }
                    Model::Full => {
                        let y = FullModel::new(&d, params, opts.kernel)?.well_coords(&pair.m_plus, 0.0)?;
                        let ymax = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                        (y, cfg.lambda * (0.5 - ymax))
                    }
                };
                let brute_match = if cfg.oracle_check && len <= BRUTE_CAP {
                    let b = brute_threshold(&d, DEFAULT_BOUND)?;
                    Some(b.m_plus == plus.m && b.m_minus == minus.m && (cfg.model == Model::Full || b.m_plus == pair.m_plus))
                } else {
                    None
                };
                let toy_full_match = if cfg.oracle_check {
                    let full = FullModel::new(&d, params, opts.kernel)?.threshold(opts.zfa_cap)?;
                    Some(full.m_plus == plus.m)
                } else {
                    None
                };
                Ok(ThresholdRecord {
                    realization: r,
                    s: d.s,
                    k_plus: plus.k,
                    k_minus: minus.k,
                    spacing: defect_spacing(&d)?,
                    f_th: pair.f_th,
                    f_check,
                    alpha: d.alpha.clone(),
                    m_plus: pair.m_plus,
                    m_minus: pair.m_minus,
                    coord_plus,
                    brute_match,
                    toy_full_match,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;

        for rec in &records {
            summary.row([
                len.to_string(),
                rec.realization.to_string(),
                rec.s.to_string(),
                rec.k_plus.to_string(),
                rec.k_minus.to_string(),
                rec.spacing.to_string(),
                float(rec.f_th),
                float(rec.f_check),
            ])?;
            for i in 0..len {
                sites.row([
                    len.to_string(),
                    rec.realization.to_string(),
                    i.to_string(),
                    float(rec.alpha[i]),
                    rec.m_plus[i].to_string(),
                    rec.m_minus[i].to_string(),
                    float(rec.coord_plus[i]),
                ])?;
            }
        }

        let forces: Vec<f64> = records.iter().map(|r| r.f_th).collect();
        let (f_mean, f_se) = mean_se(&forces);
        let (f_var, f_var_se) = variance_se(&forces);
        let max_dev = records.iter().map(|r| (r.f_th - r.f_check).abs()).fold(0.0, f64::max);
        let force_ok = max_dev <= FORCE_CHECK_TOL * cfg.lambda.max(1.0);
        ok &= force_ok;
        let mut entry = json!({
            "L": len,
            "n": records.len(),
            "f_th_mean": num(f_mean),
            "f_th_mean_se": num(f_se),
            "f_th_variance": num(f_var),
            "f_th_variance_se": num(f_var_se),
            "f_th_variance_times_L": num(f_var * len as f64),
            "f_th_variance_times_sqrt_L": num(f_var * (len as f64).sqrt()),
            "f_th_recompute_max_abs_diff": num(max_dev),
            "f_th_recompute_ok": force_ok,
        });
        if cfg.oracle_check {
            let brute: Vec<_> = records.iter().filter_map(|r| r.brute_match.map(|m| (r.realization, m))).collect();
            let brute_bad: Vec<u64> = brute.iter().filter(|x| !x.1).map(|x| x.0).collect();
            ok &= brute_bad.is_empty();
            let agree_bad: Vec<u64> =
                records.iter().filter(|r| r.toy_full_match == Some(false)).map(|r| r.realization).collect();
            entry["oracle"] = json!({
                "brute_force_checked": brute.len(),
                "brute_force_mismatches": brute_bad,
                "toy_full_agreement": records.len() - agree_bad.len(),
                "toy_full_exceptions": agree_bad,
            });
        }
        per_len.push(entry);
    }
    announce(&summary.finish()?);
    announce(&sites.finish()?);
    announce(&write_json(&cfg.out, "threshold_report.json", &prov, json!({ "passed": ok, "lengths": per_len }))?);
    Ok(ok)
}

struct T2tRecord {
    realization: u64,
    events: Vec<AvalancheEvent>,
    sigma: Vec<u64>,
    correspondence: Option<(bool, bool)>,
}

pub fn t2t(cfg: &RunConfig, command: &str) -> Result<bool, CliError> {
    let engines = t2t_engines();
    let engine = engines.get(&cfg.t2t_engine)?;
    let prov = cfg.provenance(command);
    let mut events_csv = CsvSink::create(
        &cfg.out,
        "t2t_events.csv",
        &prov,
        &["L", "realization", "tau", "init_site", "i_l", "i_r", "size", "sigma_cum", "x_after"],
    )?;
    let mut sizes_csv = CsvSink::create(&cfg.out, "t2t_sizes.csv", &prov, &["L", "realization", "u", "sigma"])?;
    let mut table_csv =
        CsvSink::create(&cfg.out, "t2t_sigma.csv", &prov, &["L", "u", "n", "mean", "se", "phi", "z_score"])?;
    let mut per_len = Vec::new();
    let mut counts = Vec::new();
    let mut ok = true;

    for &len in &cfg.lens {
        let records = (0..cfg.n as u64)
            .into_par_iter()
            .map(|r| -> Result<T2tRecord, CliError> {
                let d = Disorder::realization(cfg.seed, r, len)?;
                let run = engine.run(&d)?;
                let sigma = cfg.u_grid.iter().map(|&u| observables_at(&run, u / len as f64).sigma).collect();
                let correspondence = if cfg.correspondence_check {
                    let rep = correspondence_check(&d)?;
                    Some((rep.holds, rep.topples == run.sigma_total()))
                } else {
                    None
                };
                Ok(T2tRecord { realization: r, events: run.events, sigma, correspondence })
            })
            .collect::<Result<Vec<_>, _>>()?;

        for rec in &records {
            for e in &rec.events {
                events_csv.row([
                    len.to_string(),
                    rec.realization.to_string(),
                    e.tau.to_string(),
                    e.init_site.to_string(),
                    e.i_l.to_string(),
                    e.i_r.to_string(),
                    e.size.to_string(),
                    e.sigma_cum.to_string(),
                    float(e.x_after),
                ])?;
            }
            for (k, &u) in cfg.u_grid.iter().enumerate() {
                sizes_csv.row([len.to_string(), rec.realization.to_string(), float(u), rec.sigma[k].to_string()])?;
            }
        }

        let l2 = (len * len) as f64;
        let mut rows = Vec::new();
        let mut means = Vec::new();
        for (k, &u) in cfg.u_grid.iter().enumerate() {
            let xs: Vec<f64> = records.iter().map(|r| r.sigma[k] as f64 / l2).collect();
            let (mean, se) = mean_se(&xs);
            let theory = phi(u)?;
            let z = if se > 0.0 { (mean - theory) / se } else { f64::NAN };
            table_csv.row([len.to_string(), float(u), xs.len().to_string(), float(mean), float(se), float(theory), float(z)])?;
            rows.push(json!({ "u": num(u), "mean": num(mean), "se": num(se), "phi": num(theory), "z_score": num(z) }));
            means.push((u, mean));
        }
        let tail: Vec<(f64, f64)> = means.iter().copied().filter(|&(u, m)| u >= 30.0 && m > 0.0).collect();
        let tail_slope = if tail.len() >= 2 {
            let (us, ms): (Vec<f64>, Vec<f64>) = tail.into_iter().unzip();
            loglog_slope(&us, &ms).ok()
        } else {
            None
        };
        let ev: Vec<f64> = records.iter().map(|r| r.events.len() as f64).collect();
        let (ev_mean, ev_se) = mean_se(&ev);
        counts.push((len, ev_mean));
        let mut entry = json!({
            "L": len,
            "n": records.len(),
            "events_mean": num(ev_mean),
            "events_se": num(ev_se),
            "sigma_table": rows,
            "loglog_slope_u_ge_30": tail_slope.map_or(Value::Null, num),
        });
        if let Some(&(u0, m0)) = means.first().filter(|m| m.0 == 0.0) {
            entry["u0_mean_over_one_twelfth"] = num(m0 * 12.0);
            debug_assert_eq!(u0, 0.0);
        }
        if cfg.correspondence_check {
            let bad: Vec<u64> = records
                .iter()
                .filter(|r| r.correspondence.is_some_and(|(h, t)| !(h && t)))
                .map(|r| r.realization)
                .collect();
            ok &= bad.is_empty();
            entry["correspondence"] = json!({ "checked": records.len(), "failures": bad });
        }
        per_len.push(entry);
    }

    let mut results = json!({ "passed": ok, "lengths": per_len });
    if counts.len() >= 2 {
        let xs: Vec<f64> = counts.iter().map(|c| (c.0 as f64).ln()).collect();
        let ys: Vec<f64> = counts.iter().map(|c| c.1).collect();
        let (slope, intercept) = linear_fit(&xs, &ys);
        results["events_vs_ln_L"] = json!({ "slope": num(slope), "intercept": num(intercept) });
    }
    announce(&events_csv.finish()?);
    announce(&sizes_csv.finish()?);
    announce(&table_csv.finish()?);
    announce(&write_json(&cfg.out, "t2t_summary.json", &prov, results)?);
    Ok(ok)
}

/// Window of `X L^{1/2}` used for the large-`u` slope of the flat collapse.
pub const FLAT_SLOPE_WINDOW: (f64, f64) = (1.0, 4.0);

pub fn flat(cfg: &RunConfig, command: &str) -> Result<bool, CliError> {
    let prov = cfg.provenance(command);
    let data = estimate_flat_scaling(&cfg.lens, &cfg.u_grid, cfg.n, cfg.seed)?;
    let mut table = CsvSink::create(
        &cfg.out,
        "flat_table.csv",
        &prov,
        &["L", "u", "n", "mean_p", "se", "x_sqrt_l", "p_over_l_three_halves"],
    )?;
    for r in &data.rows {
        table.row([
            r.len.to_string(),
            float(r.u),
            r.n.to_string(),
            float(r.mean),
            float(r.se),
            float(r.collapse_x),
            float(r.collapse_y),
        ])?;
    }
    let mut totals = CsvSink::create(&cfg.out, "flat_totals.csv", &prov, &["L", "realization", "events", "p", "p_over_l_three_halves"])?;
    for s in &data.samples {
        let p = s.p.last().copied().unwrap_or(0.0);
        totals.row([
            s.len.to_string(),
            s.realization.to_string(),
            s.events.to_string(),
            float(p),
            float(p * (s.len as f64).powf(-1.5)),
        ])?;
    }

    let mut per_len = Vec::new();
    for &len in &cfg.lens {
        let totals = data.rescaled_totals(len);
        let (mean, se) = mean_se(&totals);
        let window: Vec<(f64, f64)> = data
            .rows_for(len)
            .into_iter()
            .filter(|r| r.collapse_x >= FLAT_SLOPE_WINDOW.0 && r.collapse_x <= FLAT_SLOPE_WINDOW.1 && r.mean > 0.0)
            .map(|r| (r.collapse_x, r.collapse_y))
            .collect();
        let slope = if window.len() >= 2 {
            let (xs, ys): (Vec<f64>, Vec<f64>) = window.into_iter().unzip();
            loglog_slope(&xs, &ys).ok()
        } else {
            None
        };
        per_len.push(json!({
            "L": len,
            "n": totals.len(),
            "p_over_l_three_halves_mean": num(mean),
            "p_over_l_three_halves_se": num(se),
            "large_u_slope": slope.map_or(Value::Null, num),
        }));
    }
    let mut pairs = Vec::new();
    for &a in &cfg.lens {
        for &b in &cfg.lens {
            if b != a * 4 {
                continue;
            }
            let pa = mean_se(&data.rescaled_totals(a)).0 * (a as f64).powf(1.5);
            let pb = mean_se(&data.rescaled_totals(b)).0 * (b as f64).powf(1.5);
            pairs.push(json!({ "L": a, "L4": b, "ratio": num(pb / pa), "expected": 8.0 }));
        }
    }
    let mut ks = Vec::new();
    for w in cfg.lens.windows(2) {
        let ea = EmpiricalDistribution::new(data.rescaled_totals(w[0]))?;
        let eb = EmpiricalDistribution::new(data.rescaled_totals(w[1]))?;
        ks.push(json!({ "L_a": w[0], "L_b": w[1], "ks_rescaled_totals": num(ea.ks_two_sample(&eb)) }));
    }
    announce(&table.finish()?);
    announce(&totals.finish()?);
    let results = json!({
        "slope_window_x_sqrt_l": [FLAT_SLOPE_WINDOW.0, FLAT_SLOPE_WINDOW.1],
        "lengths": per_len,
        "ratios": pairs,
        "ecdf_stability": ks,
    });
    announce(&write_json(&cfg.out, "flat_summary.json", &prov, results)?);
    Ok(true)
}

const K0_SPOTS: [f64; 7] = [0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0];
const K0_LAW_GRID: [f64; 10] = [0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0];

pub fn curves(cfg: &RunConfig, command: &str) -> Result<bool, CliError> {
    let prov = cfg.provenance(command);
    let mut phi_csv = CsvSink::create(&cfg.out, "phi.csv", &prov, &["u", "phi", "u2_phi"])?;
    for &u in &cfg.u_grid {
        let p = phi(u)?;
        phi_csv.row([float(u), float(p), float(u * u * p)])?;
    }
    let mut pu = CsvSink::create(&cfg.out, "p_u.csv", &prov, &["u", "s", "density", "cdf"])?;
    let mut norms = Vec::new();
    for &u in &cfg.u_grid {
        for &s in cfg.s_grid.iter().filter(|&&s| s > 0.0 && s < 0.25) {
            pu.row([float(u), float(s), float(p_u_density(u, s)?), float(p_u_cdf(u, s)?)])?;
        }
        norms.push(json!({ "u": num(u), "mass": num(p_u_mass(u, 0.0, 0.25)?) }));
    }
    let mut k0 = CsvSink::create(&cfg.out, "bessel.csv", &prov, &["x", "k0", "k1"])?;
    for &x in &K0_SPOTS {
        k0.row([float(x), float(bessel_k0(x)?), float(bessel_k1(x)?)])?;
    }
    let mut law = CsvSink::create(&cfg.out, "k0_law.csv", &prov, &["a", "density", "cdf"])?;
    for &a in &K0_LAW_GRID {
        law.row([float(a), float(k0_density(a)?), float(k0_cdf(a))])?;
    }
    let mut cov = CsvSink::create(&cfg.out, "covariance.csv", &prov, &["t", "bridge", "polarization"])?;
    for k in 0..=20 {
        let t = k as f64 / 20.0;
        cov.row([float(t), float(bridge_covariance(t)?), float(polar_covariance(t)?)])?;
    }
    let u_max = *cfg.u_grid.last().expect("validated nonempty");
    let results = json!({
        "phi_0": num(phi(0.0)?),
        "phi_0_expected": num(1.0 / 12.0),
        "u_max": num(u_max),
        "u_max_squared_phi": num(u_max * u_max * phi(u_max)?),
        "p_u_normalization": norms,
        "k0_at_1": num(bessel_k0(1.0)?),
    });
    for sink in [phi_csv, pu, k0, law, cov] {
        announce(&sink.finish()?);
    }
    announce(&write_json(&cfg.out, "curves_summary.json", &prov, results)?);
    Ok(true)
}

fn correspondence_report(len: usize, n: usize, seed: u64) -> Result<TestReport, CliError> {
    let outcomes = (0..n as u64)
        .into_par_iter()
        .map(|r| -> Result<(bool, bool), CliError> {
            let d = Disorder::realization(seed, r, len)?;
            let rep = correspondence_check(&d)?;
            let run = depinning::toy::t2t_evolve(&d)?;
            Ok((rep.holds, rep.topples == run.sigma_total()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let failures = outcomes.iter().filter(|o| !o.0).count();
    let topple = outcomes.iter().filter(|o| !o.1).count();
    Ok(TestReport {
        test: "sandpile_correspondence".into(),
        len,
        n,
        seed,
        checks: vec![
            Check::new("failures", failures as f64, 0.0, 0.0),
            Check::new("topples_ne_sigma", topple as f64, 0.0, 0.0),
        ],
    })
}

/// Moves the jump's output into the wrong neighbour; conserves nothing.
fn corrupted_jump(cfg: &ToyConfig, j: usize) -> depinning::Result<ToyConfig> {
    let mut z = cfg.z();
    let n = z.len();
    z[j] -= 2.0;
    z[(j + 1) % n] += 1.0;
    let mut m = cfg.m.clone();
    m[j] += 1;
    ToyConfig::from_z(m, &z)
}

/// Cases per property check and largest sampled length.
const PROPERTY_CASES: usize = 1000;
const PROPERTY_MAX_LEN: usize = 32;

pub fn test(cfg: &RunConfig, command: &str) -> Result<bool, CliError> {
    let prov = cfg.provenance(command);
    let seed = cfg.seed;
    let jump: properties::JumpFn = if cfg.mutant { &corrupted_jump } else { &toy_jump };
    let mut reports = vec![
        properties::sum_conservation(PROPERTY_CASES, PROPERTY_MAX_LEN, seed, jump)?,
        properties::fractional_conservation(PROPERTY_CASES, PROPERTY_MAX_LEN, seed, jump)?,
        properties::jump_once(PROPERTY_CASES, PROPERTY_MAX_LEN, seed)?,
        properties::bottom_edge(PROPERTY_CASES, PROPERTY_MAX_LEN, seed)?,
    ];
    reports.extend(properties::noncrossing(PROPERTY_CASES, PROPERTY_MAX_LEN, seed)?);
    reports.push(properties::k_relation(PROPERTY_CASES, PROPERTY_MAX_LEN, seed)?);
    reports.push(properties::record_structure(PROPERTY_CASES, 4 * PROPERTY_MAX_LEN, seed)?);
    for &len in &cfg.lens {
        reports.push(test_s_clt(len, cfg.n, seed)?);
        reports.push(test_exchangeability(len, cfg.n, seed)?);
        // Spacing bins need several counts each.
        reports.push(test_d_uniform(len.min(64), cfg.n.max(20 * len.min(64)), seed)?);
        reports.push(strain_bridge_check(len, cfg.n, seed)?);
        reports.push(correspondence_report(len.min(256), cfg.n.min(1000), seed)?);
    }
    let passed = reports.iter().all(|r| r.passed());
    for r in &reports {
        let verdict = if r.passed() { "PASS" } else { "FAIL" };
        let failing: Vec<&str> = r.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
        if failing.is_empty() {
            println!("{verdict} {} (L={}, n={})", r.test, r.len, r.n);
        } else {
            println!("{verdict} {} (L={}, n={}): {}", r.test, r.len, r.n, failing.join(", "));
        }
    }
    let body = json!({
        "passed": passed,
        "tolerance": TOL,
        "reports": reports.iter().map(|r| json!({
            "test": r.test,
            "L": r.len,
            "n": r.n,
            "seed": r.seed,
            "passed": r.passed(),
            "checks": r.checks.iter().map(|c| json!({
                "name": c.name,
                "statistic": num(c.statistic),
                "lo": num(c.lo),
                "hi": num(c.hi),
                "passed": c.passed,
            })).collect::<Vec<_>>(),
        })).collect::<Vec<_>>(),
    });
    announce(&write_json(&cfg.out, "test_report.json", &prov, body)?);
    Ok(passed)
}
