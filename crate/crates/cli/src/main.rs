use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use ulam_core::perturb::EmbeddingSpec;
use ulam_core::pipeline::{
    compute_budget, kk_experiment, parse_tower, recover_instance, sweep, sweep_csv,
    tower_experiment, PipelineAbort, PipelineConfig, RecoveryInstance,
};

/// Stabilize approximate *-homomorphisms and run the recovery experiments.
#[derive(Parser)]
#[command(name = "ulam", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// `key = value` config file
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// CSV output path
    #[arg(long)]
    out: Option<PathBuf>,
    /// machine-readable report on stdout
    #[arg(long)]
    json: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Print the epsilon chain for an input defect.
    Budget {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 2f64.powi(-20))]
        eps: f64,
    },
    /// Perturb one exact map and recover it.
    Recover {
        #[command(flatten)]
        common: Common,
    },
    /// Recovery sweep over the standard shapes.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// comma-separated perturbation sizes
        #[arg(long, default_value = "1e-3,1e-2")]
        etas: String,
    },
    /// Kadison-Kastler experiment on a conjugated copy of an embedding.
    Kk {
        #[command(flatten)]
        common: Common,
    },
    /// Recovery along a chain of unital inclusions.
    Tower {
        #[command(flatten)]
        common: Common,
    },
}

enum Failure {
    Assertion,
    Abort(String),
}

type Outcome = Result<(), Failure>;

fn load_config(common: &Common) -> Result<PipelineConfig, String> {
    let mut cfg = match &common.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
            PipelineConfig::from_text(&text).map_err(|e| format!("{}: {e}", p.display()))?
        }
        None => PipelineConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn write_out(path: &Path, body: &str) -> Result<(), Failure> {
    fs::write(path, body).map_err(|e| Failure::Abort(format!("{}: {e}", path.display())))
}

fn emit<T: Serialize>(common: &Common, report: &T, human: impl FnOnce() -> String) {
    if common.json {
        println!(
            "{}",
            serde_json::to_string_pretty(report).expect("report serializes")
        );
    } else {
        println!("{}", human());
    }
}

fn verdict(passed: bool) -> Outcome {
    if passed {
        Ok(())
    } else {
        Err(Failure::Assertion)
    }
}

fn abort(common: &Common, a: PipelineAbort) -> Failure {
    if common.json {
        let completed: Vec<&str> = a.completed.iter().map(|s| s.name.as_str()).collect();
        let doc = json!({ "aborted": true, "stage": a.stage, "error": a.error.to_string(), "completed": completed });
        println!("{}", serde_json::to_string_pretty(&doc).expect("json"));
    }
    Failure::Abort(a.to_string())
}

fn parse_etas(s: &str) -> Result<Vec<f64>, Failure> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Failure::Abort(format!("bad eta {t:?}")))
        })
        .collect()
}

fn budget(common: &Common, eps: f64) -> Outcome {
    let cfg = load_config(common).map_err(Failure::Abort)?;
    let b = compute_budget(eps, cfg.farah_constant).map_err(|e| Failure::Abort(e.to_string()))?;
    if let Some(p) = &common.out {
        let mut s = String::from("name,value\n");
        for (k, v) in [
            ("eps", b.eps),
            ("eps1", b.eps1),
            ("eps2", b.eps2),
            ("eps3", b.eps3),
            ("eps4", b.eps4),
            ("eps5", b.eps5),
            ("eps6", b.eps6),
            ("K", b.k),
            ("final_bound", b.final_bound),
        ] {
            s.push_str(&format!("{k},{v:e}\n"));
        }
        write_out(p, &s)?;
    }
    emit(common, &b, || {
        format!(
            "eps  {:e}\neps1 {:e}\neps2 {:e}\neps3 {:e}\neps4 {:e}\neps5 {:e}\neps6 {:e}\nK    {}\nfinal_bound {:e}",
            b.eps, b.eps1, b.eps2, b.eps3, b.eps4, b.eps5, b.eps6, b.k, b.final_bound
        )
    });
    verdict((b.stages.total() - b.final_bound).abs() <= 1e-12 * b.final_bound.max(1e-300))
}

fn recover(common: &Common) -> Outcome {
    let cfg = load_config(common).map_err(Failure::Abort)?;
    let inst = RecoveryInstance {
        shape: cfg.shape.clone(),
        multiplicities: cfg.multiplicities.clone(),
        padding: cfg.padding,
        eta: cfg.eta,
        seed: cfg.seed,
    };
    let (row, out) = recover_instance("R0", &inst, &cfg).map_err(|a| abort(common, a))?;
    if let Some(p) = &common.out {
        write_out(p, &sweep_csv(std::slice::from_ref(&row)))?;
    }
    let doc = json!({ "row": row, "report": out.report, "timings": out.timings });
    emit(common, &doc, || {
        let r = &out.report;
        let mut s = format!(
            "shape {} into M_{}, eta {:e}, measured eps {:e}\n",
            r.shape, r.n, cfg.eta, r.eps
        );
        for st in &r.stages {
            s.push_str(&format!("  {:<14} moved {:.3e}\n", st.name, st.movement));
        }
        s.push_str(&format!(
            "distance {:.3e} (<= {:.3e}), ratio/eta {:.3}, ratio/sqrt(eta) {:.4}, to truth {:.3e}\n{}",
            r.final_distance,
            r.distance_bound,
            row.ratio_linear,
            row.ratio_sqrt,
            row.truth_distance,
            if row.passed && r.passed { "PASS" } else { "FAIL" }
        ));
        s
    });
    verdict(row.passed && out.report.passed)
}

fn run_sweep(common: &Common, etas: &str) -> Outcome {
    let cfg = load_config(common).map_err(Failure::Abort)?;
    let etas = parse_etas(etas)?;
    let rep = sweep(&etas, &cfg).map_err(|a| abort(common, a))?;
    let csv = sweep_csv(&rep.rows);
    if let Some(p) = &common.out {
        write_out(p, &csv)?;
    }
    emit(common, &rep, || {
        let failed = rep.rows.iter().filter(|r| !r.passed).count();
        format!(
            "{}{} instances, {failed} failed, max distance/eta {:.3}, max distance/sqrt(eta) {:.4}",
            match &common.out {
                None => csv.clone(),
                Some(p) => format!("wrote {}\n", p.display()),
            },
            rep.rows.len(),
            rep.max_ratio_linear,
            rep.max_ratio_sqrt
        )
    });
    verdict(rep.passed)
}

fn kk(common: &Common) -> Outcome {
    let cfg = load_config(common).map_err(Failure::Abort)?;
    let spec = cfg
        .algebra_shape()
        .and_then(|s| EmbeddingSpec::standard(&s, cfg.multiplicities.clone(), cfg.padding))
        .map_err(|e| Failure::Abort(e.to_string()))?;
    let rep = kk_experiment(&spec, cfg.eta, &cfg).map_err(|a| abort(common, a))?;
    if let Some(p) = &common.out {
        let e = &rep.estimate;
        write_out(
            p,
            &format!(
                "eta,kk_lower,kk_upper,phi_distance,recovered_distance\n{:e},{:e},{:e},{:e},{:e}\n",
                rep.eta, e.lower, e.upper, rep.phi_distance, rep.recovered_distance
            ),
        )?;
    }
    emit(common, &rep, || {
        format!(
            "d_KK in [{:.3e}, {:.3e}] (2|u-1| = {:.3e})\nnearest-point map {:.3e} from identity\nrecovered {:.3e} (tolerance {})\n{}",
            rep.estimate.lower,
            rep.estimate.upper,
            rep.estimate.conjugation_bound,
            rep.phi_distance,
            rep.recovered_distance,
            rep.tolerance,
            if rep.passed { "PASS" } else { "FAIL" }
        )
    });
    verdict(rep.passed)
}

fn tower(common: &Common) -> Outcome {
    let cfg = load_config(common).map_err(Failure::Abort)?;
    let (shapes, incs) = parse_tower(&cfg.tower, cfg.tower_matrices.as_deref())
        .map_err(|e| Failure::Abort(e.to_string()))?;
    let rep = tower_experiment(&shapes, &incs, cfg.eta, &cfg).map_err(|a| abort(common, a))?;
    if let Some(p) = &common.out {
        let mut s = String::from("stage,shape,eps,final_distance,ratio\n");
        for (k, st) in rep.stages.iter().enumerate() {
            s.push_str(&format!(
                "{k},\"{}\",{:e},{:e},{:e}\n",
                st.shape, st.eps, st.final_distance, st.ratio
            ));
        }
        write_out(p, &s)?;
    }
    emit(common, &rep, || {
        let mut s = String::new();
        for st in &rep.stages {
            s.push_str(&format!(
                "{:<10} eps {:.3e} distance {:.3e} ratio {:.3}\n",
                st.shape, st.eps, st.final_distance, st.ratio
            ));
        }
        s.push_str(&format!(
            "spread {:.3} (slack {})\n{}",
            rep.spread,
            rep.slack,
            if rep.passed { "PASS" } else { "FAIL" }
        ));
        s
    });
    verdict(rep.passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::Budget { common, eps } => budget(common, *eps),
        Command::Recover { common } => recover(common),
        Command::Sweep { common, etas } => run_sweep(common, etas),
        Command::Kk { common } => kk(common),
        Command::Tower { common } => tower(common),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Assertion) => {
            eprintln!("assertion failed");
            ExitCode::from(1)
        }
        Err(Failure::Abort(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
