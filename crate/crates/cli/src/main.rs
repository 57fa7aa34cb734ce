#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trailer_pmp::checker::{check_pmp, PmpReport, ToleranceSet};
use trailer_pmp::composer::{run_script, simulate_extremal, CompositionScript, SimulateOptions};
use trailer_pmp::io::{from_json, to_csv, to_json};
use trailer_pmp::plot::{render_svg, PlotOptions};
use trailer_pmp::regular::regular_segment;
use trailer_pmp::singular::{
    merging_band_exit, merging_curve, phi_v_singular_segment, propagate_phi_omega_singular, singular_seed, MergeStart,
};
use trailer_pmp::{AdjointState, Configuration, Error, Line, MergeBranch, Segment, Trajectory};

const EXIT_CHECK_FAILED: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_TRUNCATED: u8 = 3;

#[derive(Parser)]
#[command(name = "trailer", version, about = "Pontryagin extremals for a car towing one trailer")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a single primitive.
    #[command(subcommand)]
    Primitive(Primitive),
    /// Follow the extremal of an adjoint seed with event detection.
    #[command(allow_negative_numbers = true)]
    Simulate(SimulateArgs),
    /// Run a composition script (JSON).
    Compose {
        script: PathBuf,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Validate a trajectory file against the maximum principle.
    Check {
        file: PathBuf,
        /// Also write the report as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Render a trajectory file, or a composition script, as SVG.
    #[command(allow_negative_numbers = true)]
    Plot(PlotArgs),
}

#[derive(Args, Clone)]
struct Numerics {
    /// Integrator step and sample spacing.
    #[arg(long, default_value_t = 1e-3)]
    h: f64,
    /// Switching functions below this are treated as zero.
    #[arg(long, default_value_t = 1e-9)]
    eps_switch: f64,
    /// Touchdown tolerance of merging curves.
    #[arg(long, default_value_t = 1e-6)]
    eps_merge: f64,
    /// Switching events allowed before a run is truncated.
    #[arg(long, default_value_t = 1000)]
    max_switches: usize,
}

#[derive(Args, Clone)]
struct OutputArgs {
    /// Output path; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the flat CSV export instead of JSON.
    #[arg(long)]
    csv: bool,
}

#[derive(Subcommand)]
enum Primitive {
    /// Bang-bang primitive with v, omega in {-1, +1}.
    #[command(allow_negative_numbers = true)]
    Regular {
        #[arg(long)]
        v: f64,
        #[arg(long)]
        omega: f64,
        #[arg(long)]
        dt: f64,
        #[arg(long, value_parser = parse_vec4, default_value = "0,0,0,0")]
        q0: [f64; 4],
        /// Overrides the trailer angle of q0.
        #[arg(long)]
        beta0: Option<f64>,
        #[arg(long, default_value_t = 0.0)]
        lbeta0: f64,
        /// Full adjoint seed; defaults to (0, 0, omega, lbeta0).
        #[arg(long, value_parser = parse_vec4)]
        lambda0: Option<[f64; 4]>,
        #[command(flatten)]
        num: Numerics,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Merging curve: approach (v = -1) or departure (v = +1) along the line c.
    #[command(allow_negative_numbers = true)]
    Merge {
        #[arg(long, default_value_t = 1.0)]
        branch: f64,
        #[arg(long)]
        beta_start: f64,
        #[arg(long, default_value_t = -1.0)]
        v: f64,
        #[arg(long, value_parser = parse_vec3, default_value = "1,0,0")]
        line: [f64; 3],
        #[command(flatten)]
        num: Numerics,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Merging run in the direction of growing |beta|, up to the band edge.
    #[command(allow_negative_numbers = true)]
    BandExit {
        #[arg(long, default_value_t = 1.0)]
        branch: f64,
        #[arg(long)]
        beta_start: f64,
        #[arg(long, default_value_t = 1.0)]
        v: f64,
        #[arg(long, value_parser = parse_vec3, default_value = "1,0,0")]
        line: [f64; 3],
        #[command(flatten)]
        num: Numerics,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Rotation-type singular primitive, omega = +-1 with constant v.
    #[command(allow_negative_numbers = true)]
    PhiV {
        #[arg(long)]
        omega: f64,
        #[arg(long, default_value_t = 0.0)]
        v: f64,
        #[arg(long)]
        dt: f64,
        #[arg(long, value_parser = parse_vec4, default_value = "0,0,0,0")]
        q0: [f64; 4],
        #[command(flatten)]
        num: Numerics,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// phi_omega-singular arc seeded at q0 with the given ltheta and phi_v.
    #[command(allow_negative_numbers = true)]
    Singular {
        #[arg(long, value_parser = parse_vec4, default_value = "0,0,0,0")]
        q0: [f64; 4],
        #[arg(long)]
        lambda_theta: f64,
        #[arg(long)]
        phi_v: f64,
        #[arg(long)]
        dt: f64,
        #[command(flatten)]
        num: Numerics,
        #[command(flatten)]
        out: OutputArgs,
    },
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_parser = parse_vec4, default_value = "0,0,0,0")]
    q0: [f64; 4],
    /// Adjoint seed (lx, ly, ltheta, lbeta); drawn from --seed when absent.
    #[arg(long, value_parser = parse_vec4)]
    lambda0: Option<[f64; 4]>,
    /// Duration.
    #[arg(long = "T", alias = "t-final")]
    t_final: f64,
    /// Seed for a random adjoint in [-1, 1]^4.
    #[arg(long)]
    seed: Option<u64>,
    /// File of seeds, one per line; runs each and prints one summary line per seed.
    #[arg(long)]
    batch: Option<PathBuf>,
    /// Linear velocity on phi_v-singular stretches, where it is free.
    #[arg(long, default_value_t = 0.0)]
    phi_v_singular_v: f64,
    #[command(flatten)]
    num: Numerics,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args)]
struct PlotArgs {
    file: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Time between robot/trailer glyphs.
    #[arg(long, default_value_t = 2.0)]
    glyph_interval: f64,
    #[arg(long)]
    no_glyphs: bool,
    #[arg(long, default_value_t = 800.0)]
    width: f64,
    #[arg(long, default_value_t = 600.0)]
    height: f64,
}

fn parse_vec<const N: usize>(s: &str) -> Result<[f64; N], String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    parts.try_into().map_err(|v: Vec<f64>| format!("expected {N} comma-separated numbers, got {}", v.len()))
}

fn parse_vec4(s: &str) -> Result<[f64; 4], String> {
    parse_vec::<4>(s)
}

fn parse_vec3(s: &str) -> Result<[f64; 3], String> {
    parse_vec::<3>(s)
}

/// Command failure with its exit code.
struct Fail(u8, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(EXIT_INPUT, e.to_string())
    }
}

type CmdResult = Result<u8, Fail>;

fn options(num: &Numerics) -> SimulateOptions {
    SimulateOptions {
        h: num.h,
        eps_switch: num.eps_switch,
        eps_merge: num.eps_merge,
        max_switches: num.max_switches,
        ..SimulateOptions::default()
    }
}

fn write_text(path: Option<&Path>, text: &str) -> Result<(), Fail> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| Fail(EXIT_INPUT, format!("cannot write {}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn write_traj(traj: &Trajectory, out: &OutputArgs) -> Result<(), Fail> {
    let text = if out.csv { to_csv(traj)? } else { to_json(traj)? };
    write_text(out.out.as_deref(), &text)
}

fn single(seg: Segment) -> Trajectory {
    Trajectory { constants: seg.constants, segments: vec![seg], truncated: false }
}

fn check_step(h: f64) -> Result<(), Fail> {
    if h > 0.0 && h <= 1e-2 {
        Ok(())
    } else {
        Err(Fail(EXIT_INPUT, format!("--h must lie in (0, 0.01], got {h}")))
    }
}

fn cmd_primitive(p: Primitive) -> CmdResult {
    let (traj, out) = match p {
        Primitive::Regular { v, omega, dt, q0, beta0, lbeta0, lambda0, num, out } => {
            check_step(num.h)?;
            let mut q = Configuration::from_array(q0);
            if let Some(b) = beta0 {
                q.beta = b;
            }
            let lam = lambda0.map_or(AdjointState::new(0.0, 0.0, omega, lbeta0), AdjointState::from_array);
            (single(regular_segment(&q, &lam, v, omega, dt, num.h)?), out)
        }
        Primitive::Merge { branch, beta_start, v, line, num, out } => {
            check_step(num.h)?;
            let l = Line::new(line[0], line[1], line[2])?;
            let curve = merging_curve(&l, v, MergeBranch::new(branch)?, beta_start, num.eps_merge, num.h)?;
            (single(curve.segment), out)
        }
        Primitive::BandExit { branch, beta_start, v, line, num, out } => {
            check_step(num.h)?;
            let l = Line::new(line[0], line[1], line[2])?;
            let curve = merging_band_exit(&l, v, MergeBranch::new(branch)?, MergeStart::Beta(beta_start), None, num.h)?;
            (single(curve.segment), out)
        }
        Primitive::PhiV { omega, v, dt, q0, num, out } => {
            check_step(num.h)?;
            if !(v.abs() <= 1.0) {
                return Err(Fail(EXIT_INPUT, format!("--v must lie in [-1, 1], got {v}")));
            }
            let seg = phi_v_singular_segment(&Configuration::from_array(q0), omega, &|_| v, dt, num.h)?;
            (single(seg), out)
        }
        Primitive::Singular { q0, lambda_theta, phi_v, dt, num, out } => {
            check_step(num.h)?;
            let (start, c) = singular_seed(&Configuration::from_array(q0), lambda_theta, phi_v)?;
            let arc = propagate_phi_omega_singular(&start, &c, dt, num.h, num.eps_merge)?;
            (single(arc.segment), out)
        }
    };
    if traj.segments[0].samples.len() < 2 {
        eprintln!("note: the primitive has zero duration");
    }
    write_traj(&traj, &out)?;
    Ok(0)
}

fn summary(traj: &Trajectory) -> String {
    let mut s = format!("{:<4} {:<20} {:>18} {:>18}  {}\n", "seg", "kind", "t_start", "t_end", "exit");
    for (i, seg) in traj.segments.iter().enumerate() {
        s += &format!(
            "{:<4} {:<20} {:>18.12} {:>18.12}  {}\n",
            i,
            seg.kind.name(),
            seg.t_start,
            seg.t_end,
            seg.exit.name()
        );
    }
    let times: Vec<String> = traj.switch_times().iter().map(|t| format!("{t:.15}")).collect();
    s += &format!("switch times: [{}]\n", times.join(", "));
    if traj.truncated {
        s += "truncated: too many switching events (possible chattering)\n";
    }
    s
}

fn random_adjoint(seed: u64) -> AdjointState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    AdjointState::new(
        rng.gen_range(-1.0..=1.0),
        rng.gen_range(-1.0..=1.0),
        rng.gen_range(-1.0..=1.0),
        rng.gen_range(-1.0..=1.0),
    )
}

fn cmd_simulate(a: SimulateArgs) -> CmdResult {
    let mut opts = options(&a.num);
    opts.phi_v_singular_v = a.phi_v_singular_v;
    let q0 = Configuration::from_array(a.q0);
    if let Some(batch) = &a.batch {
        let text = fs::read_to_string(batch).map_err(|e| Fail(EXIT_INPUT, format!("{}: {e}", batch.display())))?;
        let mut code = 0;
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let seed: u64 = line.parse().map_err(|e| Fail(EXIT_INPUT, format!("bad seed {line:?}: {e}")))?;
            let traj = simulate_extremal(&q0, &random_adjoint(seed), a.t_final, &opts)?;
            let rep = check_pmp(&traj, &ToleranceSet::default());
            println!(
                "seed {seed}: segments {}, switches {}, check {}{}",
                traj.segments.len(),
                traj.switch_times().len(),
                if rep.pass { "pass" } else { "FAIL" },
                if traj.truncated { ", truncated" } else { "" }
            );
            if let Some(dir) = &a.out.out {
                fs::create_dir_all(dir).map_err(|e| Fail(EXIT_INPUT, e.to_string()))?;
                let ext = if a.out.csv { "csv" } else { "json" };
                let text = if a.out.csv { to_csv(&traj)? } else { to_json(&traj)? };
                write_text(Some(&dir.join(format!("seed-{seed}.{ext}"))), &text)?;
            }
            if traj.truncated {
                code = EXIT_TRUNCATED;
            }
        }
        return Ok(code);
    }
    let lambda0 = match (a.lambda0, a.seed) {
        (Some(l), _) => AdjointState::from_array(l),
        (None, Some(seed)) => random_adjoint(seed),
        (None, None) => return Err(Fail(EXIT_INPUT, "give --lambda0 or --seed".into())),
    };
    let traj = simulate_extremal(&q0, &lambda0, a.t_final, &opts)?;
    write_traj(&traj, &a.out)?;
    let table = summary(&traj);
    if a.out.out.is_some() {
        print!("{table}");
    } else {
        eprint!("{table}");
    }
    Ok(if traj.truncated { EXIT_TRUNCATED } else { 0 })
}

fn read_script(path: &Path) -> Result<CompositionScript, Fail> {
    let text = fs::read_to_string(path).map_err(|e| Fail(EXIT_INPUT, format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Fail(EXIT_INPUT, format!("{}: {e}", path.display())))
}

fn cmd_compose(script: &Path, out: &OutputArgs) -> CmdResult {
    let s = read_script(script)?;
    let traj = run_script(&s.q0, &s)?;
    write_traj(&traj, out)?;
    Ok(if traj.truncated { EXIT_TRUNCATED } else { 0 })
}

fn render_report(path: &Path, rep: &PmpReport) -> String {
    let mut s = format!("{}: {}\n", path.display(), if rep.pass { "PASS" } else { "FAIL" });
    if let Some(msg) = &rep.structural {
        s += &format!("  structural failure: {msg}\n");
        return s;
    }
    for c in &rep.checks {
        let status = if !c.applicable {
            "n/a"
        } else if c.pass {
            "pass"
        } else {
            "FAIL"
        };
        s += &format!("  {:<22} {:>5}  max residual {:>10.3e} (tol {:.0e})", c.name, status, c.max_residual, c.tolerance);
        if c.worst_t.is_finite() {
            s += &format!(" at t = {:.6}", c.worst_t);
        }
        s.push('\n');
    }
    s
}

fn cmd_check(file: &Path, report: Option<&Path>) -> CmdResult {
    let text = fs::read_to_string(file).map_err(|e| Fail(EXIT_INPUT, format!("{}: {e}", file.display())))?;
    let traj = from_json(&text)?;
    let rep = check_pmp(&traj, &ToleranceSet::default());
    print!("{}", render_report(file, &rep));
    if let Some(p) = report {
        let json = serde_json::to_string_pretty(&rep).map_err(|e| Fail(EXIT_INPUT, e.to_string()))?;
        write_text(Some(p), &(json + "\n"))?;
    }
    Ok(if rep.pass { 0 } else { EXIT_CHECK_FAILED })
}

fn cmd_plot(a: PlotArgs) -> CmdResult {
    let text = fs::read_to_string(&a.file).map_err(|e| Fail(EXIT_INPUT, format!("{}: {e}", a.file.display())))?;
    let is_trajectory = serde_json::from_str::<serde_json::Value>(&text)
        .map_err(|e| Fail(EXIT_INPUT, format!("{}: {e}", a.file.display())))?
        .get("format_version")
        .is_some();
    let traj = if is_trajectory {
        from_json(&text)?
    } else {
        let s = read_script(&a.file)?;
        run_script(&s.q0, &s)?
    };
    let opts = PlotOptions {
        width: a.width,
        height: a.height,
        glyph_interval: if a.no_glyphs { None } else { Some(a.glyph_interval) },
    };
    write_text(a.out.as_deref(), &render_svg(&traj, &opts)?)?;
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::Primitive(p) => cmd_primitive(p),
        Cmd::Simulate(a) => cmd_simulate(a),
        Cmd::Compose { script, out } => cmd_compose(&script, &out),
        Cmd::Check { file, report } => cmd_check(&file, report.as_deref()),
        Cmd::Plot(a) => cmd_plot(a),
    };
    match res {
        Ok(code) => ExitCode::from(code),
        Err(Fail(code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
