//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the summary lines are always shown.
//! Set `V2G_ACCEPTANCE_ONLY=1,3,7` to run a subset.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode, Output};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use v2g_core::droop::{volt_var, volt_watt, DroopCurve};
use v2g_core::env::{action_to_setpoints, reward, Action, Phase, V2gEnv};
use v2g_core::fleet::{allocate, DegradationParams, EvUnit, FleetState};
use v2g_core::grid::newton::solve_newton_raphson;
use v2g_core::grid::synth::random_radial_feeder;
use v2g_core::grid::{load_feeder, scale_loads, solve_power_flow, Hub};
use v2g_core::harness::{evaluate, parse_table_violations, Controller, Scenario};
use v2g_core::sac::{
    actor_loss, alpha_loss, critic_loss, evaluate_policy, Checkpoint, CriticPair, DenseNet, GaussianPolicy,
    Matrix, SacAgent, SacConfig,
};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn repo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn scenario_path(name: &str) -> PathBuf {
    repo().join("scenarios").join(format!("{name}.toml"))
}

fn v2g(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_v2g"))
        .args(args)
        .output()
        .expect("v2g binary runs")
}

fn v2g_ok(args: &[&str]) -> Result<Output, String> {
    let out = v2g(args);
    if out.status.success() {
        Ok(out)
    } else {
        Err(format!(
            "`v2g {}` failed: {}",
            args.join(" "),
            String::from_utf8_lossy(&out.stderr).trim()
        ))
    }
}

// ---------------------------------------------------------------- 1

/// |V|^4 + (2(RP + XQ) - V0^2)|V|^2 + |Z|^2 |S|^2 = 0, larger root.
fn two_bus_closed_form(v0: f64, r: f64, x: f64, p: f64, q: f64) -> f64 {
    let b = 2.0 * (r * p + x * q) - v0 * v0;
    let c = (r * r + x * x) * (p * p + q * q);
    ((-b + (b * b - 4.0 * c).sqrt()) / 2.0).sqrt()
}

fn criterion_1() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    for _ in 0..200 {
        let n = rng.random_range(3..=10);
        let (feeder, demands, injections) = random_radial_feeder(&mut rng, n);
        let bfs = solve_power_flow(&feeder, &demands, &injections);
        let nr = solve_newton_raphson(&feeder, &demands, &injections, 1e-12, 50);
        if !(bfs.converged && nr.converged) {
            failures += 1;
            continue;
        }
        for (a, b) in bfs.v_pu.iter().zip(&nr.v_pu) {
            worst = worst.max((a - b).abs());
        }
    }
    // 1 kV and 1 MVA bases make ohms and MW per-unit directly.
    let (r, x, p, q, v0) = (0.05, 0.08, 1.2, 0.5, 1.02);
    let text = format!(
        "[system]\nsource_pu {v0}\n[buses]\ns 1 slack\nl 1 -\n[lines]\ns l {r} {x}\n[loads]\nl {} {}\n",
        p * 1000.0,
        q * 1000.0
    );
    let f = load_feeder(&text).expect("two-bus feeder parses");
    let sol = solve_power_flow(&f, &scale_loads(&f, 1.0), &[]);
    let two_bus_err = (sol.v_pu[1] - two_bus_closed_form(v0, r, x, p, q)).abs();
    let secs = start.elapsed().as_secs_f64();
    verdict(
        failures == 0 && worst <= 1e-6 && two_bus_err <= 1e-6 && secs < 10.0,
        format!(
            "power-flow oracle: max |dV| sweep vs Newton {worst:.2e} p.u. on 200 feeders ({failures} unconverged), \
             two-bus closed-form error {two_bus_err:.2e} (tol 1e-6), {secs:.2} s (limit 10 s)"
        ),
    )
}

// ---------------------------------------------------------------- 2

fn criterion_2() -> Verdict {
    let start = Instant::now();
    let mut checks: Vec<(&str, f64, f64)> = Vec::new();
    checks.push(("reward all in band", reward(&[1.0; 5]), 10.0));
    checks.push(("reward one bus at 0.93", reward(&[0.93, 1.0, 1.0]), -2.0));
    checks.push(("reward 0.94 and 1.06", reward(&[0.94, 1.06]), -2.0));

    let single_ev_fleet = |p_avail: f64| {
        FleetState::new(
            vec![EvUnit::new(75.0, 0.5, 1.0, p_avail / 75.0)],
            0.96,
            vec![1.0; 24],
            DegradationParams::default(),
            0,
        )
        .expect("fleet")
    };
    let mut f = single_ev_fleet(600.0);
    let r = allocate(300.0, 400.0, &mut f, 10, 0.01);
    checks.push(("3-4-5 P_fleet", r.p_fleet_kw, 500.0 / 0.96));
    checks.push(("3-4-5 rho", r.rho, 1.0));
    checks.push(("3-4-5 P_sup", r.p_sup_kw, 300.0));
    checks.push(("3-4-5 Q_sup", r.q_sup_kvar, 400.0));
    let mut f = single_ev_fleet(500.0 / 0.96 / 2.0);
    let r = allocate(300.0, 400.0, &mut f, 10, 0.01);
    checks.push(("half rho", r.rho, 0.5));
    checks.push(("half P_sup", r.p_sup_kw, 150.0));
    checks.push(("half Q_sup", r.q_sup_kvar, 200.0));

    let c = DroopCurve::default();
    checks.push(("volt-var 1.00", volt_var(&c, 1.0), 0.0));
    checks.push(("volt-var 0.90", volt_var(&c, 0.90), 1.0));
    checks.push(("volt-var 0.94", volt_var(&c, 0.94), 0.5));
    checks.push(("volt-var 1.10", volt_var(&c, 1.10), -1.0));
    checks.push(("volt-watt 1.015", volt_watt(&c, 1.015), 0.0));
    checks.push(("volt-watt 0.86", volt_watt(&c, 0.86), 1.0));
    checks.push(("volt-watt 1.06", volt_watt(&c, 1.06), -0.5));

    let hubs = [Hub {
        bus: "h".into(),
        p_max_kw: 500.0,
        q_max_kvar: 400.0,
    }];
    let map = |a: Vec<f64>| action_to_setpoints(&Action::new(a), &hubs, None, (6, 23)).expect("mapping").0[0];
    let full = map(vec![1.0, 1.0]);
    let zero = map(vec![0.0, 0.0]);
    let mixed = map(vec![-0.5, 0.25]);
    checks.push(("mapping (1,1) P", full.p_kw, 500.0));
    checks.push(("mapping (1,1) Q", full.q_kvar, 400.0));
    checks.push(("mapping 0 P", zero.p_kw, 0.0));
    checks.push(("mapping 0 Q", zero.q_kvar, 0.0));
    checks.push(("mapping (-0.5,0.25) P", mixed.p_kw, -250.0));
    checks.push(("mapping (-0.5,0.25) Q", mixed.q_kvar, 100.0));

    let secs = start.elapsed().as_secs_f64();
    let bad: Vec<String> = checks
        .iter()
        .filter(|(_, got, want)| !((got - want).abs() <= 1e-9))
        .map(|(name, got, want)| format!("{name}: {got} != {want}"))
        .collect();
    verdict(
        bad.is_empty() && secs < 1.0,
        if bad.is_empty() {
            format!("exact-arithmetic suites: {} values within 1e-9, {secs:.3} s (limit 1 s)", checks.len())
        } else {
            format!("exact-arithmetic suites: {}", bad.join("; "))
        },
    )
}

// ---------------------------------------------------------------- 3

const FD_H: f64 = 1e-5;

fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::from_vec(
        rows,
        cols,
        (0..rows * cols).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect(),
    )
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-7)
}

fn fd_worst(
    flat: &[f64],
    analytic: &[f64],
    rng: &mut ChaCha8Rng,
    coords: usize,
    mut loss: impl FnMut(&[f64]) -> f64,
) -> f64 {
    let mut worst: f64 = 0.0;
    for _ in 0..coords {
        let i = rng.random_range(0..flat.len());
        let mut p = flat.to_vec();
        p[i] = flat[i] + FD_H;
        let up = loss(&p);
        p[i] = flat[i] - FD_H;
        let down = loss(&p);
        worst = worst.max(rel_err(analytic[i], (up - down) / (2.0 * FD_H)));
    }
    worst
}

fn flat_grads(g: &[Matrix]) -> Vec<f64> {
    g.iter().flat_map(|m| m.data().iter().copied()).collect()
}

fn criterion_3() -> Verdict {
    let start = Instant::now();
    let (obs, act, n, coords) = (34, 10, 32, 20);
    let hidden = SacConfig::default().hidden;
    let (mut w_critic, mut w_actor, mut w_alpha): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for init in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(9_000 + init);
        let policy = GaussianPolicy::new(obs, act, &hidden, &mut rng);
        let critics = CriticPair::new(obs, act, &hidden, &mut rng);
        let s = normal_matrix(&mut rng, n, obs, 1.0);
        let a = normal_matrix(&mut rng, n, act, 0.5).map(f64::tanh);
        let y = normal_matrix(&mut rng, n, 1, 5.0);
        let eps = normal_matrix(&mut rng, n, act, 1.0);

        let lg = critic_loss(&critics.q1, &s, &a, &y);
        let x = s.hcat(&a);
        let mut probe: DenseNet = critics.q1.clone();
        w_critic = w_critic.max(fd_worst(&critics.q1.flat_params(), &flat_grads(&lg.grads), &mut rng, coords, |p| {
            probe.set_flat_params(p);
            let out = probe.forward(&x);
            out.data().iter().zip(y.data()).map(|(o, t)| (o - t) * (o - t)).sum::<f64>() / n as f64
        }));

        let alpha = 0.2 + 0.1 * init as f64;
        let (lg, mean_lp) = actor_loss(&policy, &critics.q1, &critics.q2, &s, &eps, alpha);
        let mut probe = policy.clone();
        w_actor = w_actor.max(fd_worst(&policy.trunk.flat_params(), &flat_grads(&lg.grads), &mut rng, coords, |p| {
            probe.trunk.set_flat_params(p);
            let (acts, lp) = probe.sample_batch(&s, &eps);
            let xa = s.hcat(&acts);
            let (q1, q2) = (critics.q1.forward(&xa), critics.q2.forward(&xa));
            (0..n).map(|i| alpha * lp.get(i, 0) - q1.get(i, 0).min(q2.get(i, 0))).sum::<f64>() / n as f64
        }));

        for _ in 0..coords {
            let log_alpha = rng.random_range(-4.0..1.0);
            let lp = mean_lp + rng.random_range(-2.0..2.0);
            let (_, g) = alpha_loss(log_alpha, lp, -(act as f64));
            let num = (alpha_loss(log_alpha + FD_H, lp, -(act as f64)).0
                - alpha_loss(log_alpha - FD_H, lp, -(act as f64)).0)
                / (2.0 * FD_H);
            w_alpha = w_alpha.max(rel_err(g, num));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let tol = 1e-4;
    verdict(
        w_critic < tol && w_actor < tol && w_alpha < tol && secs < 30.0,
        format!(
            "gradient checks (h 1e-5, {coords} coords x 5 inits, 256x256 nets): worst relative error \
             critic {w_critic:.1e}, actor {w_actor:.1e}, alpha {w_alpha:.1e} (tol 1e-4), {secs:.1} s (limit 30 s)"
        ),
    )
}

// ---------------------------------------------------------------- 4

fn day_rewards(env: &mut V2gEnv, mut controller: impl FnMut(&[f64]) -> Vec<f64>) -> Result<Vec<f64>, String> {
    let mut obs = env.reset(0).map_err(|e| e.to_string())?;
    let mut out = Vec::new();
    for _ in 0..24 {
        let res = env.step(&Action::new(controller(&obs.v_pu))).map_err(|e| e.to_string())?;
        out.push(res.reward);
        obs = res.observation;
    }
    Ok(out)
}

fn criterion_4() -> Verdict {
    let mut worst: f64 = 0.0;
    let mut runs = 0;
    for name in ["single_hub_mild", "multi_hub_mild", "five_bus_train"] {
        let s = match Scenario::load(&scenario_path(name)) {
            Ok(s) => s,
            Err(e) => return verdict(false, format!("phase consistency: {e}")),
        };
        let hub_buses = s.feeder.hub_bus_indices().to_vec();
        let agent = SacAgent::new(s.feeder.bus_count(), 2 * hub_buses.len(), SacConfig::default(), 77)
            .expect("agent");
        let droop = s.droop;
        let controllers: [(&str, Box<dyn Fn(&[f64]) -> Vec<f64>>); 2] = [
            (
                "droop",
                Box::new(|v: &[f64]| hub_buses.iter().flat_map(|&b| droop.factors(v[b])).collect()),
            ),
            ("rl", Box::new(|v: &[f64]| agent.act_deterministic(v))),
        ];
        for (label, ctl) in controllers.iter() {
            let fleets = vec![FleetState::unconstrained(); hub_buses.len()];
            let mut ideal = V2gEnv::new(s.feeder.clone(), s.evaluation_env(Phase::Idealized), vec![]).expect("env");
            let mut fleet = V2gEnv::new(s.feeder.clone(), s.evaluation_env(Phase::FleetConstrained), fleets)
                .expect("env");
            let (a, b) = match (day_rewards(&mut ideal, ctl), day_rewards(&mut fleet, ctl)) {
                (Ok(a), Ok(b)) => (a, b),
                (Err(e), _) | (_, Err(e)) => return verdict(false, format!("phase consistency {name}/{label}: {e}")),
            };
            worst = worst.max(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max));
            runs += 1;
        }
    }
    verdict(
        worst <= 1e-9,
        format!("phase consistency: max per-hour reward gap {worst:.1e} over {runs} 24-hour runs (tol 1e-9)"),
    )
}

// ---------------------------------------------------------------- 5

fn criterion_5(work: &Path) -> Verdict {
    let start = Instant::now();
    let path = scenario_path("five_bus_train");
    let s = match Scenario::load(&path) {
        Ok(s) => s,
        Err(e) => return verdict(false, format!("learning smoke test: {e}")),
    };
    let env_config = s.training_env().expect("training env");
    let mut env = V2gEnv::new(s.feeder.clone(), env_config, vec![]).expect("env");
    let act_dim = 2 * s.feeder.hubs().len();
    let episodes = 20;
    let eval_seed = 424_242;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let random = evaluate_policy(&mut env, episodes, eval_seed, |_| {
        (0..act_dim).map(|_| rng.random_range(-1.0..=1.0)).collect()
    })
    .expect("random policy evaluation");

    let ckpt = work.join("five_bus.json");
    let ckpt_s = ckpt.to_string_lossy().into_owned();
    if let Err(e) = v2g_ok(&["train", "--scenario", &path.to_string_lossy(), "--steps", "20000", "--out", &ckpt_s]) {
        return verdict(false, format!("learning smoke test: {e}"));
    }
    let agent = Checkpoint::load(&ckpt).expect("checkpoint").into_agent(0).expect("agent");
    let trained = evaluate_policy(&mut env, episodes, eval_seed, |o| agent.act_deterministic(o))
        .expect("trained policy evaluation");
    let base = evaluate(&s, &Controller::None, false, s.seed).expect("baseline");
    let rl = evaluate(&s, &Controller::Rl(Box::new(agent)), false, s.seed).expect("rl");
    let (bv, rv) = (base.summary.violation_hours, rl.summary.violation_hours);
    let mins = start.elapsed().as_secs_f64() / 60.0;
    verdict(
        trained.mean_episode_reward > random.mean_episode_reward && 2 * rv <= bv && bv > 0 && mins < 30.0,
        format!(
            "learning smoke test (five-bus, 20k steps): mean episode reward {:.2} vs random {:.2}; \
             mild violation hours {rv} vs baseline {bv} (need <= 50%), {mins:.1} min (target 30 min)",
            trained.mean_episode_reward, random.mean_episode_reward
        ),
    )
}

// ---------------------------------------------------------------- 6

/// Evaluates the given rows through the CLI and returns the table's
/// `(label, violation hours)` pairs.
fn table_rows(
    work: &Path,
    scenario: &str,
    checkpoint: &Path,
    rows: &[(&str, bool)],
) -> Result<Vec<(String, usize)>, String> {
    let sp = scenario_path(scenario).to_string_lossy().into_owned();
    let ck = checkpoint.to_string_lossy().into_owned();
    let mut files = Vec::new();
    for (i, (controller, ev)) in rows.iter().enumerate() {
        let out = work.join(format!("{scenario}_{i}.json")).to_string_lossy().into_owned();
        let mut args = vec!["eval", "--scenario", sp.as_str(), "--controller", controller, "--out", out.as_str()];
        if *controller == "rl" {
            args.extend(["--checkpoint", ck.as_str()]);
        }
        if *ev {
            args.push("--ev-constrained");
        }
        v2g_ok(&args)?;
        files.push(out);
    }
    let dir = work.join(format!("{scenario}_report")).to_string_lossy().into_owned();
    let mut args = vec!["report", "--out", dir.as_str()];
    args.extend(files.iter().map(String::as_str));
    v2g_ok(&args)?;
    let table = fs::read_to_string(Path::new(&dir).join("table.txt")).map_err(|e| e.to_string())?;
    println!("--- {scenario}\n{}", table.split("\n\n").next().unwrap_or(""));
    Ok(parse_table_violations(&table))
}

fn lookup(rows: &[(String, usize)], label: &str) -> Option<usize> {
    rows.iter().find(|(l, _)| l == label).map(|(_, v)| *v)
}

fn criterion_6(work: &Path) -> Vec<(String, Verdict)> {
    let train = |scenario: &str, out: &Path| -> Result<(), String> {
        let sp = scenario_path(scenario).to_string_lossy().into_owned();
        v2g_ok(&["train", "--scenario", &sp, "--out", &out.to_string_lossy()]).map(|_| ())
    };
    let multi_ck = work.join("multi_hub.json");
    let single_ck = work.join("single_hub.json");
    let trained = train("multi_hub_mild", &multi_ck).and_then(|_| train("single_hub_mild", &single_ck));
    if let Err(e) = trained {
        let v = || verdict(false, format!("training failed: {e}"));
        return vec![("6a".into(), v()), ("6b".into(), v()), ("6c".into(), v())];
    }
    let single_rows = [("none", false), ("rl", false), ("rl", true), ("droop", false), ("droop", true)];
    let mut out = Vec::new();

    out.push((
        "6a".to_string(),
        match table_rows(work, "multi_hub_mild", &multi_ck, &[("none", false), ("rl", false), ("droop", false)]) {
            Ok(rows) => {
                let rl = lookup(&rows, "RL (coord.)").unwrap_or(usize::MAX);
                let droop = lookup(&rows, "Droop (coord.)").unwrap_or(usize::MAX);
                verdict(
                    rl <= 1 && droop <= 1,
                    format!(
                        "multi-hub mild, coordinated: RL {rl} and droop {droop} violation hours (need <= 1), baseline {}",
                        lookup(&rows, "Baseline").unwrap_or(0)
                    ),
                )
            }
            Err(e) => verdict(false, e),
        },
    ));

    out.push((
        "6b".to_string(),
        match table_rows(work, "single_hub_mild", &single_ck, &single_rows) {
            Ok(rows) => {
                let base = lookup(&rows, "Baseline").unwrap_or(0);
                let rl = lookup(&rows, "RL (EV-constr.)").unwrap_or(0);
                let droop = lookup(&rows, "Droop (EV-constr.)").unwrap_or(0);
                let ok = |v: usize| base.saturating_sub(v) <= 3;
                verdict(
                    ok(rl) && ok(droop) && base > 0,
                    format!(
                        "single-hub mild, EV-constrained: baseline {base}, RL {rl}, droop {droop} violation hours \
                         (reduction must be <= 3)"
                    ),
                )
            }
            Err(e) => verdict(false, e),
        },
    ));

    out.push((
        "6c".to_string(),
        match table_rows(work, "single_hub_aggressive", &single_ck, &single_rows) {
            Ok(rows) => {
                let base = lookup(&rows, "Baseline").unwrap_or(0);
                let others: Vec<String> = rows
                    .iter()
                    .filter(|(l, _)| l != "Baseline")
                    .map(|(l, v)| format!("{l} {v}"))
                    .collect();
                let unchanged = rows.iter().all(|(_, v)| *v == base) && rows.len() == single_rows.len();
                verdict(
                    unchanged && base > 0,
                    format!("single-hub aggressive: baseline {base}; {} (must all equal baseline)", others.join(", ")),
                )
            }
            Err(e) => verdict(false, e),
        },
    ));
    out
}

// ---------------------------------------------------------------- 7

fn report_body(path: &Path) -> Result<String, String> {
    let text = fs::read_to_string(path).map_err(|e| e.to_string())?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    Ok(value["body"].to_string())
}

fn dir_contents(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let mut entries: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .map_err(|e| e.to_string())?
        .map(|e| {
            let e = e.expect("dir entry");
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).expect("readable"))
        })
        .collect();
    entries.sort();
    Ok(entries)
}

fn criterion_7(work: &Path) -> Verdict {
    let run = || -> Result<Vec<String>, String> {
        let mut checked = Vec::new();
        let feeder = repo().join("feeders/five_bus");
        let scenario = work.join("det.toml");
        fs::write(
            &scenario,
            format!(
                "feeder = {:?}\nprofile = \"mild\"\nseed = 3\n[fleet]\nev_count = 6\n\
                 [training]\nsteps = 400\neval_every = 200\neval_episodes = 1\n\
                 [sac]\nhidden = [16, 16]\nbatch_size = 32\nwarmup_steps = 100\n",
                feeder.to_string_lossy()
            ),
        )
        .map_err(|e| e.to_string())?;
        let sp = scenario.to_string_lossy().into_owned();

        let a = v2g_ok(&["validate-feeder", &feeder.to_string_lossy()])?;
        let b = v2g_ok(&["validate-feeder", &feeder.to_string_lossy()])?;
        if a.stdout != b.stdout {
            return Err("validate-feeder output differs".into());
        }
        checked.push("validate-feeder");

        let mut ckpts = Vec::new();
        for k in 0..2 {
            let ck = work.join(format!("det_{k}.json"));
            v2g_ok(&["train", "--scenario", &sp, "--seed", "11", "--out", &ck.to_string_lossy()])?;
            ckpts.push(ck);
        }
        let read = |p: &Path| fs::read(p).map_err(|e| e.to_string());
        if read(&ckpts[0])? != read(&ckpts[1])? {
            return Err("train checkpoints differ".into());
        }
        let log = |p: &Path| read(&v2g_core::harness::training_log_path(p));
        if log(&ckpts[0])? != log(&ckpts[1])? {
            return Err("training logs differ".into());
        }
        checked.push("train");

        let ck = ckpts[0].to_string_lossy().into_owned();
        let mut reports = Vec::new();
        for (controller, ev) in [("none", false), ("droop", true), ("rl", true), ("rl", false)] {
            let mut bodies = Vec::new();
            for k in 0..2 {
                let out = work.join(format!("det_{controller}_{ev}_{k}.json"));
                let os = out.to_string_lossy().into_owned();
                let mut args = vec!["eval", "--scenario", &sp, "--seed", "5", "--controller", controller, "--out", &os];
                if controller == "rl" {
                    args.extend(["--checkpoint", ck.as_str()]);
                }
                if ev {
                    args.push("--ev-constrained");
                }
                v2g_ok(&args)?;
                bodies.push(report_body(&out)?);
                if k == 0 {
                    reports.push(os);
                }
            }
            if bodies[0] != bodies[1] {
                return Err(format!("eval {controller} (ev {ev}) bodies differ"));
            }
        }
        checked.push("eval");

        let mut outs = Vec::new();
        for k in 0..2 {
            let dir = work.join(format!("det_report_{k}")).to_string_lossy().into_owned();
            let mut args = vec!["report", "--out", dir.as_str()];
            args.extend(reports.iter().map(String::as_str));
            v2g_ok(&args)?;
            outs.push(dir_contents(Path::new(&dir))?);
        }
        if outs[0] != outs[1] {
            return Err("report outputs differ".into());
        }
        checked.push("report");

        let bad = v2g(&["eval", "--scenario", &sp, "--controller", "rl"]);
        let line = String::from_utf8_lossy(&bad.stderr);
        let parsed: Result<serde_json::Value, _> = serde_json::from_str(line.trim());
        if bad.status.success() || parsed.map(|v| v["error"].is_null()).unwrap_or(true) {
            return Err("missing checkpoint did not produce a machine-readable error".into());
        }
        Ok(checked.into_iter().map(String::from).collect())
    };
    match run() {
        Ok(verbs) => verdict(true, format!("determinism: byte-identical bodies for {}", verbs.join(", "))),
        Err(e) => verdict(false, format!("determinism: {e}")),
    }
}

fn main() -> ExitCode {
    let only: Option<Vec<String>> = std::env::var("V2G_ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').map(|t| t.trim().to_string()).collect());
    let wanted = |id: &str| only.as_ref().is_none_or(|o| o.iter().any(|t| t == id));
    let work = tempfile::tempdir().expect("temp dir");
    let mut results: Vec<(String, Verdict)> = Vec::new();
    let mut record = |id: &str, v: Verdict| {
        println!("ACCEPTANCE {id} {} {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        results.push((id.to_string(), v));
    };
    if wanted("1") {
        record("1", criterion_1());
    }
    if wanted("2") {
        record("2", criterion_2());
    }
    if wanted("3") {
        record("3", criterion_3());
    }
    if wanted("4") {
        record("4", criterion_4());
    }
    if wanted("5") {
        record("5", criterion_5(work.path()));
    }
    if wanted("6") {
        for (id, v) in criterion_6(work.path()) {
            record(&id, v);
        }
    }
    if wanted("7") {
        record("7", criterion_7(work.path()));
    }
    let failed: Vec<&str> = results.iter().filter(|(_, v)| !v.pass).map(|(id, _)| id.as_str()).collect();
    println!(
        "ACCEPTANCE SUMMARY {} passed, {} failed{}",
        results.len() - failed.len(),
        failed.len(),
        if failed.is_empty() { String::new() } else { format!(" ({})", failed.join(", ")) }
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
