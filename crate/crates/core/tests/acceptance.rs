//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use clap::Parser;
use rgds::assouad::{jsr_bounds, MatrixFamily};
use rgds::cli::{run, Cli, Outcome};
use rgds::infinite::{extinction_fixed_point, grow_tree, solve_s_h_inf, TreeLimits, TreeStop};
use rgds::linalg::{spectral_radius, Mat};
use rgds::pressure::{
    band_step, box_dimension_1var, moran_blocks, ussc_dimension_1var, BandVector, PressureProblem,
};
use rgds::realization::{mix64, unit_f64, RealizationStream};
use rgds::sampler::{box_count, default_scales, grid_count, prefractal_cover};
use rgds::stopping::{build_from_letters, build_stopping_graph, spec_k_max};
use rgds::system::{line_system, SystemSpec};
use rgds::words::{arr_add, arr_mat_mul, arr_mul, ArrMatrix, Arrangement};
use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::{Duration, Instant};

fn spec_file(name: &str) -> String {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../specs")
        .join(name);
    p.display().to_string()
}

fn load(name: &str) -> SystemSpec {
    SystemSpec::from_json(&std::fs::read_to_string(spec_file(name)).unwrap()).unwrap()
}

fn cli(argv: &[&str]) -> (Outcome, Duration) {
    let mut full = vec!["rgds"];
    full.extend_from_slice(argv);
    let (name, args) = Cli::try_parse_from(full)
        .expect("argv parses")
        .command
        .split();
    let t = Instant::now();
    let out = run(name, &args);
    (out, t.elapsed())
}

/// Deterministic source for the randomized suites.
struct Rng(u64);

impl Rng {
    fn next(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(1);
        mix64(self.0)
    }
    fn unit(&mut self) -> f64 {
        unit_f64(self.next())
    }
    fn below(&mut self, n: usize) -> usize {
        (self.next() % n as u64) as usize
    }
    fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }
}

type Check = Result<String, String>;

fn ensure(ok: bool, msg: String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg)
    }
}

fn golden_values() -> Check {
    let path = spec_file("cantor_pair.json");
    let (out, t1) = cli(&[
        "dim1var",
        "--spec-path",
        &path,
        "--seed",
        "7",
        "--k",
        "2000",
        "--m",
        "200",
        "--no-timestamp",
    ]);
    ensure(out.code == 0, format!("dim1var exited {}", out.code))?;
    let s_o = out.report.s_o.as_ref().ok_or("no s_O")?.value;
    let lyap = out
        .report
        .s_o_lyapunov
        .as_ref()
        .ok_or("no Lyapunov s_O")?
        .value;
    ensure((s_o - 0.721057).abs() <= 1e-6, format!("s_O = {s_o}"))?;
    ensure(
        (lyap - 0.721057).abs() <= 5e-3,
        format!("Lyapunov s_O = {lyap}"),
    )?;
    let (out, t2) = cli(&[
        "diminf",
        "--spec-path",
        &path,
        "--seed",
        "7",
        "--no-timestamp",
    ]);
    ensure(out.code == 0, format!("diminf exited {}", out.code))?;
    let s_h = out.report.s_h.as_ref().ok_or("no s_h")?.value;
    ensure((s_h - 0.724952).abs() <= 1e-6, format!("s_h = {s_h}"))?;
    ensure(
        t1 < Duration::from_secs(10) && t2 < Duration::from_secs(10),
        format!("runtime {t1:?} / {t2:?}"),
    )?;
    Ok(format!(
        "s_O = {s_o:.7}, Lyapunov {lyap:.5}, s_h = {s_h:.7} ({:.1}s, {:.1}s)",
        t1.as_secs_f64(),
        t2.as_secs_f64()
    ))
}

fn deterministic_oracles() -> Check {
    let third = 2f64.ln() / 3f64.ln();
    let mt = load("middle_third.json");
    let s_o = ussc_dimension_1var(&mt, 100, 1, 0, 1e-12)
        .map_err(|e| e.to_string())?
        .s;
    let s_h = solve_s_h_inf(&mt, 1e-12).map_err(|e| e.to_string())?.s;
    let sched: Vec<f64> = (1..=6).map(|j| 3f64.powi(-j)).collect();
    let bx = box_dimension_1var(&mt, &sched, 200, 1, 0)
        .map_err(|e| e.to_string())?
        .estimate;
    let stream = RealizationStream::new(0, &mt.probs());
    let cover = prefractal_cover(&mt, &stream, 0, 1.0 / 3.0, 6).map_err(|e| e.to_string())?;
    let slope = box_count(&cover, &default_scales(&cover))
        .map_err(|e| e.to_string())?
        .slope;
    for (name, v) in [("s_O", s_o), ("s_h", s_h), ("box", bx)] {
        ensure(
            (v - 0.630930).abs() <= 1e-6,
            format!("middle third {name} = {v}"),
        )?;
        ensure(
            (v - third).abs() <= 1e-6,
            format!("middle third {name} = {v}"),
        )?;
    }
    ensure(
        (slope - third).abs() <= 0.02,
        format!("box-count slope {slope}"),
    )?;

    // root of ρ([[2^-s, 4^-s], [4^-s, 2^-s]]) = 1, i.e. 2^-s + 4^-s = 1
    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let m = Mat::from_rows(&[
            vec![2f64.powf(-mid), 4f64.powf(-mid)],
            vec![4f64.powf(-mid), 2f64.powf(-mid)],
        ]);
        if spectral_radius(&m) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let golden = 0.5 * (lo + hi);
    ensure(
        (golden - 0.694242).abs() <= 1e-6,
        format!("oracle {golden}"),
    )?;
    let g2 = load("g2.json");
    let s_o = ussc_dimension_1var(&g2, 100, 1, 0, 1e-12)
        .map_err(|e| e.to_string())?
        .s;
    let s_h = solve_s_h_inf(&g2, 1e-12).map_err(|e| e.to_string())?.s;
    let sched: Vec<f64> = (1..=10).map(|j| 2f64.powi(-j)).collect();
    let bx = box_dimension_1var(&g2, &sched, 2000, 1, 0)
        .map_err(|e| e.to_string())?
        .estimate;
    for (name, v) in [("s_O", s_o), ("s_h", s_h), ("box", bx)] {
        ensure((v - golden).abs() <= 1e-4, format!("G2 {name} = {v}"))?;
    }
    Ok(format!(
        "middle third {third:.6} on every path (slope {slope:.5}); G2 s_O {s_o:.6}, s_h {s_h:.6}, box {bx:.6}"
    ))
}

fn dimension_trend() -> Check {
    let path = spec_file("cantor_pair.json");
    let (out, t) = cli(&[
        "dim1var",
        "--spec-path",
        &path,
        "--seed",
        "7",
        "--eps-schedule",
        "0.25,0.0625,0.015625,0.00390625,0.0009765625",
        "--no-timestamp",
    ]);
    ensure(out.code == 0, format!("dim1var exited {}", out.code))?;
    let h = &out.report.s_h_eps;
    ensure(h.len() == 5, format!("{} scales", h.len()))?;
    for w in h.windows(2) {
        let slack = 2.0 * (w[0].stderr.powi(2) + w[1].stderr.powi(2)).sqrt();
        ensure(
            w[1].value >= w[0].value - slack,
            format!(
                "s_H drops from {} to {} (slack {slack})",
                w[0].value, w[1].value
            ),
        )?;
    }
    let s_b = out.report.s_b.as_ref().ok_or("no s_B")?.value;
    let last = h[4].value;
    ensure(
        (last - s_b).abs() <= 0.01,
        format!("final s_H {last} vs s_B {s_b}"),
    )?;
    ensure(t < Duration::from_secs(120), format!("runtime {t:?}"))?;
    let vals: Vec<String> = h.iter().map(|x| format!("{:.5}", x.value)).collect();
    Ok(format!(
        "s_H,ε = [{}], s_B = {s_b:.5} ({:.1}s)",
        vals.join(", "),
        t.as_secs_f64()
    ))
}

fn assouad_value() -> Check {
    let path = spec_file("cantor_pair.json");
    let (out, t) = cli(&[
        "assouad",
        "--spec-path",
        &path,
        "--seed",
        "7",
        "--no-timestamp",
    ]);
    ensure(out.code == 0, format!("assouad exited {}", out.code))?;
    let a = out
        .report
        .assouad_value
        .as_ref()
        .ok_or("no Assouad value")?;
    let exact = 3f64.ln() / 4f64.ln();
    ensure(
        (a.value - exact).abs() <= 1e-3,
        format!("Assouad {}", a.value),
    )?;
    ensure(
        (a.value - 0.792481).abs() <= 1e-3,
        format!("Assouad {}", a.value),
    )?;
    let b = out.report.s_b.as_ref().ok_or("no s_B")?;
    ensure(
        b.value <= a.value + 2.0 * (a.stderr + b.stderr),
        format!("s_B {} above Assouad {}", b.value, a.value),
    )?;
    ensure(
        out.report.check_invariants().is_empty(),
        "report invariants".into(),
    )?;
    Ok(format!(
        "Assouad {:.6} (log3/log4 = {exact:.6}), s_B {:.4} ({:.1}s)",
        a.value,
        b.value,
        t.as_secs_f64()
    ))
}

fn random_small_system(rng: &mut Rng) -> SystemSpec {
    let n = 1 + rng.below(2);
    let letters = 1 + rng.below(2);
    let mut graphs = Vec::new();
    for _ in 0..letters {
        let mut edges = Vec::new();
        for v in 0..n {
            let r = rng.range(0.2, 0.6);
            edges.push((v, rng.below(n), r, rng.range(0.0, 1.0 - r)));
        }
        while edges.len() < 3 && rng.unit() < 0.5 {
            let r = rng.range(0.2, 0.6);
            edges.push((rng.below(n), rng.below(n), r, rng.range(0.0, 1.0 - r)));
        }
        graphs.push((1.0 / letters as f64, edges));
    }
    line_system(n, &graphs).expect("random system")
}

fn oracle_equivalence() -> Check {
    let mut rng = Rng(2024);
    let mut checked = 0;
    let mut blocks = 0;
    for case in 0..20 {
        let spec = random_small_system(&mut rng);
        let n = spec.n();
        let eps = rng.range(0.15, 0.6);
        let s = rng.range(0.0, 1.5);
        let steps = 1 + rng.below(4);
        let stream = RealizationStream::new(case, &spec.probs());
        let km = spec_k_max(&spec, eps).map_err(|e| e.to_string())?;
        let ratios = spec.ratios();
        // word-level row 𝟙 P(ω) P(σω)⋯ keyed by offset
        let mut row: BTreeMap<usize, ArrMatrix> = BTreeMap::new();
        row.insert(0, ArrMatrix::identity(n));
        let mut bv = BandVector::unit(n);
        for _ in 0..steps {
            let mut next: BTreeMap<usize, ArrMatrix> = BTreeMap::new();
            for (&j, a) in &row {
                let letters = stream.shifted(j as u64).sample_letters(km);
                let sg = build_from_letters(&spec, &letters, eps).map_err(|e| e.to_string())?;
                for (q, w) in sg.word_blocks(n).iter().enumerate() {
                    let prod = arr_mat_mul(a, w).map_err(|e| e.to_string())?;
                    let slot = next
                        .entry(j + q + 1)
                        .or_insert_with(|| ArrMatrix::zero(n, n));
                    *slot = slot.add(&prod).map_err(|e| e.to_string())?;
                }
            }
            row = next;
            bv = band_step(&bv, &spec, &stream, s, eps).map_err(|e| e.to_string())?;
        }
        let mut scale = 0.0f64;
        let evals: Vec<(usize, Mat)> = row
            .iter()
            .map(|(&j, a)| (j, a.moran_eval(s, &ratios).expect("eval")))
            .collect();
        for (_, m) in &evals {
            scale = scale.max(m.max_entry());
        }
        ensure(!evals.is_empty(), format!("case {case}: empty word row"))?;
        for (j, m) in &evals {
            blocks += 1;
            let b = bv.unscaled_block(*j);
            for (x, y) in m.data().iter().zip(b.data()) {
                ensure(
                    (x - y).abs() <= 1e-10 * scale.max(f64::MIN_POSITIVE),
                    format!("case {case}: offset {j}: word {x} vs band {y}"),
                )?;
            }
        }
        // count identity on the first step
        let sg = build_stopping_graph(&spec, &stream, eps).map_err(|e| e.to_string())?;
        let p0 = moran_blocks(&sg, n, 0.0);
        let words = sg.word_blocks(n);
        for v in 0..n {
            let from_matrix: f64 = p0
                .iter()
                .map(|b| (0..n).map(|w| b.matrix[(v, w)]).sum::<f64>())
                .sum();
            let from_words: usize = words
                .iter()
                .map(|b| (0..n).map(|w| b.get(v, w).len()).sum::<usize>())
                .sum();
            ensure(
                from_matrix == sg.out_count(v) as f64 && from_words == sg.out_count(v),
                format!("case {case}: vertex {v} count mismatch"),
            )?;
        }
        checked += 1;
    }
    Ok(format!(
        "{checked} random systems, {blocks} offset blocks: band = word product to 1e-10, counts exact"
    ))
}

fn random_arrangement(rng: &mut Rng) -> Arrangement {
    let k = rng.below(4);
    Arrangement::from_words(
        (0..k)
            .map(|_| (0..rng.below(3)).map(|_| rng.below(3)).collect())
            .collect(),
    )
}

fn property_suites() -> Check {
    let mut rng = Rng(77);
    // semiring laws
    for _ in 0..200 {
        let (a, b, c) = (
            random_arrangement(&mut rng),
            random_arrangement(&mut rng),
            random_arrangement(&mut rng),
        );
        let add = |x: &Arrangement, y: &Arrangement| arr_add(x, y).unwrap();
        let mul = |x: &Arrangement, y: &Arrangement| arr_mul(x, y).unwrap();
        ensure(add(&a, &b) == add(&b, &a), "⊕ commutes".into())?;
        ensure(
            add(&add(&a, &b), &c) == add(&a, &add(&b, &c)),
            "⊕ associates".into(),
        )?;
        ensure(
            mul(&mul(&a, &b), &c) == mul(&a, &mul(&b, &c)),
            "· associates".into(),
        )?;
        ensure(
            mul(&a, &add(&b, &c)) == add(&mul(&a, &b), &mul(&a, &c)),
            "left distributes".into(),
        )?;
        ensure(
            mul(&add(&a, &b), &c) == add(&mul(&a, &c), &mul(&b, &c)),
            "right distributes".into(),
        )?;
        ensure(
            add(&a, &Arrangement::empty()) == a,
            "∅ is additive identity".into(),
        )?;
        ensure(
            mul(&a, &Arrangement::empty()).is_empty(),
            "∅ annihilates".into(),
        )?;
        ensure(
            mul(&a, &Arrangement::unit()) == a && mul(&Arrangement::unit(), &a) == a,
            "ε0 is unit".into(),
        )?;
    }

    // s-monotonicity sandwich, per sample
    let pair = load("cantor_pair.json");
    let eps = 0.1;
    let problem = PressureProblem::new(&pair, eps, 200, 8, 5).map_err(|e| e.to_string())?;
    let lo_ratio = pair.c_min() * eps;
    for (s, d) in [(0.0, 0.25), (0.6, 0.1), (0.7, 1.0)] {
        let a = problem.estimate(s).map_err(|e| e.to_string())?;
        let b = problem.estimate(s + d).map_err(|e| e.to_string())?;
        for (x, y) in a.samples.iter().zip(&b.samples) {
            ensure(
                *y <= x + d * eps.ln() + 1e-12 && *y >= x + d * lo_ratio.ln() - 1e-12,
                format!("sandwich broken at s={s}"),
            )?;
        }
    }

    // stopping-window ratio bounds
    for case in 0..50 {
        let spec = random_small_system(&mut rng);
        let eps = rng.range(0.05, 0.7);
        let stream = RealizationStream::new(case, &spec.probs());
        let sg = build_stopping_graph(&spec, &stream, eps).map_err(|e| e.to_string())?;
        for e in sg.edges.iter().chain(&sg.pruned) {
            ensure(
                e.ratio <= eps * (1.0 + 1e-12) && e.ratio > spec.c_min() * eps * (1.0 - 1e-12),
                format!("ratio {} outside window at eps {eps}", e.ratio),
            )?;
        }
    }

    // two-sided covering bound
    let c_inv = (1.0 / pair.c_min()).ceil();
    for seed in 0..20 {
        let eps = [0.25, 0.1, 0.03][seed as usize % 3];
        let stream = RealizationStream::new(seed, &pair.probs());
        let sg = build_stopping_graph(&pair, &stream, eps).map_err(|e| e.to_string())?;
        let e_count = sg.out_count(0) as f64;
        let cover = prefractal_cover(&pair, &stream, 0, eps, 1).map_err(|e| e.to_string())?;
        ensure(cover.len() as f64 == e_count, "cover size".into())?;
        let n = grid_count(&cover, eps * pair.seed_box().diameter()) as f64;
        ensure(
            e_count / (c_inv + 2.0) <= n && n <= 3.0 * c_inv * e_count,
            format!("N = {n}, |E| = {e_count}"),
        )?;
    }

    // JSR sandwich and singleton exactness
    for _ in 0..40 {
        let k = 1 + rng.below(3);
        let members: Vec<Mat> = (0..k)
            .map(|_| Mat::from_vec(2, 2, (0..4).map(|_| rng.range(0.0, 2.0)).collect()))
            .collect();
        let labels = (0..k).map(|i| vec![i]).collect();
        let fam = MatrixFamily::new(members.clone(), labels).map_err(|e| e.to_string())?;
        let b = jsr_bounds(&fam, 6).map_err(|e| e.to_string())?;
        ensure(
            b.lower <= b.upper * (1.0 + 1e-9),
            format!("{} > {}", b.lower, b.upper),
        )?;
        if k == 1 {
            let rho = spectral_radius(&members[0]);
            ensure(
                (b.lower - rho).abs() <= 1e-9 * (1.0 + rho)
                    && (b.upper - rho).abs() <= 1e-9 * (1.0 + rho),
                format!("singleton {rho} vs [{}, {}]", b.lower, b.upper),
            )?;
        }
    }

    // ∞-variable growth rate at depth 12
    let rho0 = spectral_radius(&rgds::infinite::expectation_matrix(&pair, 0.0).matrix);
    let runs = 20;
    let mut total = 0.0;
    for seed in 0..runs {
        let t = grow_tree(&pair, seed, 0, TreeStop::Depth(12), TreeLimits::default())
            .map_err(|e| e.to_string())?;
        total += (t.frontier.len() as f64).ln() / 12.0;
    }
    let rate = total / runs as f64;
    ensure(
        (rate - rho0.ln()).abs() <= 0.05,
        format!("growth {rate} vs {}", rho0.ln()),
    )?;

    // extinction frequency
    let perc = line_system(
        1,
        &[
            (
                0.5,
                vec![(0, 0, 0.3, 0.0), (0, 0, 0.3, 0.35), (0, 0, 0.3, 0.7)],
            ),
            (0.5, vec![]),
        ],
    )
    .unwrap();
    let limits = TreeLimits {
        survival_cap: Some(500),
        ..TreeLimits::default()
    };
    let runs = 10_000;
    let mut extinct = 0;
    for seed in 0..runs {
        let t =
            grow_tree(&perc, seed, 0, TreeStop::Depth(400), limits).map_err(|e| e.to_string())?;
        extinct += t.extinct as usize;
    }
    let freq = extinct as f64 / runs as f64;
    let q = extinction_fixed_point(&perc, 0);
    ensure(
        (q - (5f64.sqrt() - 1.0) / 2.0).abs() < 1e-9,
        format!("fixed point {q}"),
    )?;
    ensure(
        (freq - q).abs() <= 0.02,
        format!("extinction {freq} vs {q}"),
    )?;

    Ok(format!(
        "semiring ×200, sandwich, window, covering, JSR; growth {rate:.4} vs {:.4}; extinction {freq:.4} vs {q:.4}",
        rho0.ln()
    ))
}

fn determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let pair = spec_file("cantor_pair.json");
    let perc = spec_file("percolation.json");
    let carpet = spec_file("carpet_pair.json");
    let svg = dir.path().join("c.svg").display().to_string();
    let configs: Vec<Vec<&str>> = vec![
        vec!["validate", "--spec-path", &pair],
        vec![
            "dim1var",
            "--spec-path",
            &pair,
            "--k",
            "300",
            "--m",
            "20",
            "--eps-schedule",
            "0.25,0.0625",
        ],
        vec!["diminf", "--spec-path", &pair],
        vec![
            "assouad",
            "--spec-path",
            &pair,
            "--eps-schedule",
            "0.25,0.0625",
            "--k",
            "300",
            "--m",
            "8",
        ],
        vec![
            "assouad",
            "--spec-path",
            &pair,
            "--mode",
            "inf-var",
            "--eps-schedule",
            "0.25,0.0625",
        ],
        vec![
            "pressure",
            "--spec-path",
            &pair,
            "--eps",
            "0.1",
            "--s",
            "0.7",
            "--k",
            "300",
            "--m",
            "20",
        ],
        vec!["stopping", "--spec-path", &pair, "--eps", "0.05"],
        vec![
            "simulate",
            "--spec-path",
            &carpet,
            "--eps",
            "0.2",
            "--rounds",
            "2",
        ],
        vec![
            "simulate",
            "--spec-path",
            &perc,
            "--mode",
            "inf-var",
            "--eps",
            "0.02",
            "--seed",
            "4",
        ],
        vec![
            "boxcount",
            "--spec-path",
            &pair,
            "--eps",
            "0.0625",
            "--rounds",
            "3",
        ],
        vec![
            "render",
            "--spec-path",
            &carpet,
            "--eps",
            "0.2",
            "--rounds",
            "2",
            "--out-path",
            &svg,
        ],
    ];
    for cfg in &configs {
        let mut outputs = Vec::new();
        for threads in ["1", "4", "1"] {
            let mut argv = cfg.clone();
            if !cfg.contains(&"--seed") {
                argv.extend_from_slice(&["--seed", "11"]);
            }
            argv.extend_from_slice(&["--no-timestamp", "--threads", threads]);
            let (out, _) = cli(&argv);
            ensure(out.code == 0, format!("{} exited {}", cfg[0], out.code))?;
            let mut bytes = out.report.to_json();
            if cfg[0] == "render" {
                bytes.push_str(&std::fs::read_to_string(&svg).map_err(|e| e.to_string())?);
            }
            outputs.push(bytes);
        }
        ensure(
            outputs.windows(2).all(|w| w[0] == w[1]),
            format!("{} output differs between runs", cfg[0]),
        )?;
    }
    Ok(format!(
        "{} configurations byte-identical across reruns and 1/4 threads",
        configs.len()
    ))
}

fn main() {
    let checks: [(&str, fn() -> Check); 7] = [
        ("golden values", golden_values),
        ("deterministic oracles", deterministic_oracles),
        ("dimension trend", dimension_trend),
        ("assouad", assouad_value),
        ("oracle equivalence", oracle_equivalence),
        ("property suites", property_suites),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in checks.iter().enumerate() {
        let t = Instant::now();
        match f() {
            Ok(msg) => println!(
                "PASS criterion {} ({name}): {msg} [{:.1}s]",
                i + 1,
                t.elapsed().as_secs_f64()
            ),
            Err(msg) => {
                failed += 1;
                println!("FAIL criterion {} ({name}): {msg}", i + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
