use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use qtorus::cyclotomic::DEFAULT_TOL;
use qtorus::groupoid::{
    all_relation_loops, canonical_ngon, fan, opt_torus_explore, relation_loop, relation_path_len, Functor,
    LoopRelation, Sanity,
};
use qtorus::operators::{a_canonical, a_closed_form, t_closed_form, t_compositional, verify_relation, RelationKind};
use qtorus::qdilog::DilogParams;
use qtorus::reps::{c_map, d_map, f_argument, f_inv, f_map, gen_a, gen_b, rep_dual_left, rep_dual_right, rep_mu, s_map};
use qtorus::{QtError, RootContext, Weight, C64};

#[derive(Parser)]
#[command(name = "qtorus", version, about = "Cyclic representations at odd roots of unity: operators and relation checks")]
struct Cli {
    /// Relative tolerance.
    #[arg(long, global = true, env = "QTORUS_TOL")]
    tol: Option<f64>,
    /// Also write the JSON report here.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long = "N", default_value_t = 3)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run relation checks on sampled or explicit weights.
    Check {
        /// Relation kind, or `all`.
        #[arg(long, default_value = "all")]
        suite: String,
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 3)]
        samples: usize,
        /// JSON list of weights, e.g. '[{"x":[2,0],"y":[1,0]}]'.
        #[arg(long)]
        weights: Option<String>,
    },
    /// Print an operator as JSON.
    Op {
        #[arg(long)]
        kind: String,
        #[command(flatten)]
        common: Common,
        /// Weights as `re,im,re,im` for (x, y).
        #[arg(long)]
        l1: Option<String>,
        #[arg(long)]
        l2: Option<String>,
        #[arg(long)]
        l3: Option<String>,
        #[arg(long)]
        weights: Option<String>,
    },
    /// Dotted triangulations and their loops.
    Groupoid {
        #[command(subcommand)]
        cmd: GroupoidCmd,
    },
}

#[derive(Subcommand)]
enum GroupoidCmd {
    /// Fan n-gon with sampled path weights.
    Ngon {
        #[arg(long = "n")]
        sides: usize,
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        verify_all_loops: bool,
        #[arg(long, default_value_t = 6)]
        max_len: usize,
        /// Allow non-sane intermediate objects.
        #[arg(long)]
        permissive: bool,
    },
    /// One instance of a relation on the smallest fan polygon carrying it.
    Loop {
        /// a3, pentagon, ata, tat or commute.
        #[arg(long)]
        relation: String,
        #[command(flatten)]
        common: Common,
    },
    /// Explore the sane component of the once-punctured torus.
    OptTorus {
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = std::f64::consts::SQRT_2)]
        beta: f64,
        #[arg(long, default_value_t = 6)]
        depth: usize,
        /// Write the move graph in DOT format.
        #[arg(long)]
        dot: Option<PathBuf>,
    },
}

enum Failure {
    Relation(Value),
    Config(String),
}

impl From<QtError> for Failure {
    fn from(e: QtError) -> Self {
        Failure::Config(e.to_string())
    }
}

type Outcome = std::result::Result<Value, Failure>;

fn parse_quad(s: &str) -> Result<Weight, Failure> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| Failure::Config(format!("bad weight '{s}': {e}")))?;
    if v.len() != 4 {
        return Err(Failure::Config(format!("weight '{s}' needs four numbers re,im,re,im")));
    }
    Ok(Weight::new(C64::new(v[0], v[1]), C64::new(v[2], v[3]))?)
}

fn parse_weights_json(s: &str) -> Result<Vec<Weight>, Failure> {
    let ws: Vec<Weight> = serde_json::from_str(s).map_err(|e| Failure::Config(format!("bad weights JSON: {e}")))?;
    for w in &ws {
        if w.is_singular() {
            return Err(Failure::Config(format!("singular weight {w}")));
        }
    }
    Ok(ws)
}

fn context(n: usize, tol: Option<f64>) -> Result<RootContext, Failure> {
    Ok(RootContext::with_tol(n, tol.unwrap_or(DEFAULT_TOL))?)
}

fn cmd_check(suite: &str, c: &Common, tol: Option<f64>, samples: usize, weights: Option<&str>) -> Outcome {
    let ctx = context(c.n, tol)?;
    let kinds: Vec<RelationKind> = if suite == "all" {
        RelationKind::ALL.to_vec()
    } else {
        vec![suite.parse()?]
    };
    let explicit = weights.map(parse_weights_json).transpose()?;
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let mut reports = Vec::new();
    let mut all = true;
    for kind in kinds {
        let runs = if explicit.is_some() { 1 } else { samples.max(1) };
        for _ in 0..runs {
            let ws = match &explicit {
                Some(ws) => ws.clone(),
                None => Weight::sample_regular(&mut rng, kind.weight_count()),
            };
            match verify_relation(&ctx, kind, &ws) {
                Ok(rep) => {
                    all &= rep.passed;
                    reports.push(serde_json::to_value(&rep).expect("serializable"));
                }
                Err(e) if explicit.is_some() => return Err(Failure::Config(format!("{kind}: {e}"))),
                Err(e) => {
                    all = false;
                    reports.push(json!({"name": kind.name(), "passed": false, "error": e.to_string(), "weights_used": ws}));
                }
            }
        }
    }
    let out = json!({
        "command": "check",
        "suite": suite,
        "N": ctx.n(),
        "seed": c.seed,
        "tol": ctx.tol(),
        "all_passed": all,
        "reports": reports,
    });
    if all {
        Ok(out)
    } else {
        Err(Failure::Relation(out))
    }
}

fn cmd_op(kind: &str, c: &Common, tol: Option<f64>, quads: [Option<&str>; 3], weights: Option<&str>) -> Outcome {
    let ctx = context(c.n, tol)?;
    let mut given: Vec<Weight> = match weights {
        Some(s) => parse_weights_json(s)?,
        None => {
            let mut v = Vec::new();
            for q in quads.into_iter().flatten() {
                v.push(parse_quad(q)?);
            }
            v
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let mut need = |k: usize, given: &mut Vec<Weight>| -> Result<Vec<Weight>, Failure> {
        if given.len() < k {
            let extra = Weight::sample_regular(&mut rng, k);
            given.extend_from_slice(&extra[given.len()..]);
        }
        qtorus::weights::require_regular(&given[..k])?;
        Ok(given[..k].to_vec())
    };
    let op = match kind {
        "A" => gen_a(&ctx).to_json(),
        "B" => gen_b(&ctx).to_json(),
        "S" => s_map(&ctx).to_json(),
        "mu" => rep_mu(&ctx, &need(1, &mut given)?[0])?.to_json(),
        "dualL" => rep_dual_left(&ctx, &need(1, &mut given)?[0])?.to_json(),
        "dualR" => rep_dual_right(&ctx, &need(1, &mut given)?[0])?.to_json(),
        "C" => c_map(&ctx, &need(1, &mut given)?[0])?.to_json(),
        "D" => d_map(&ctx, &need(1, &mut given)?[0])?.to_json(),
        "F" | "Finv" | "Acan" | "Aclosed" | "Phi" => {
            let w = need(2, &mut given)?;
            match kind {
                "F" => f_map(&ctx, &w[0], &w[1])?,
                "Finv" => f_inv(&ctx, &w[0], &w[1])?,
                "Acan" => a_canonical(&ctx, &w[0], &w[1])?,
                "Aclosed" => a_closed_form(&ctx, &w[0], &w[1])?,
                _ => DilogParams::from_pair(&ctx, &w[0], &w[1])?.phi(&ctx, &f_argument(&ctx)?)?,
            }
            .to_json()
        }
        "T" | "Tclosed" => {
            let w = need(3, &mut given)?;
            if kind == "T" {
                t_compositional(&ctx, &w[0], &w[1], &w[2])?.to_json()
            } else {
                t_closed_form(&ctx, &w[0], &w[1], &w[2])?.to_json()
            }
        }
        other => return Err(Failure::Config(format!("unknown operator kind '{other}'"))),
    };
    Ok(json!({"command": "op", "kind": kind, "N": ctx.n(), "seed": c.seed, "weights": given, "operator": op}))
}

fn cmd_ngon(n: usize, c: &Common, tol: Option<f64>, verify: bool, max_len: usize, permissive: bool) -> Outcome {
    let ctx = context(c.n, tol)?;
    if n < 3 {
        return Err(Failure::Config(format!("n must be at least 3, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let path = Weight::sample_regular(&mut rng, n - 1);
    let obj = canonical_ngon(n, &path, &fan(n))?;
    let mut out = json!({
        "command": "groupoid ngon",
        "n": n,
        "N": ctx.n(),
        "seed": c.seed,
        "object": obj.to_json(),
        "sane": obj.is_sane(),
    });
    if !verify {
        return Ok(out);
    }
    let mode = if permissive { Sanity::Permissive } else { Sanity::Strict };
    let f = Functor::new(&ctx);
    let mut reports = Vec::new();
    let mut all = true;
    for spec in all_relation_loops(&ctx, &obj, max_len, mode)? {
        let rep = f.verify_loop(&spec.name, &spec.start, &spec.moves, mode, spec.expected)?;
        all &= rep.passed;
        reports.push(serde_json::to_value(&rep).expect("serializable"));
    }
    out["loops"] = json!(reports.len());
    out["all_passed"] = json!(all);
    out["reports"] = json!(reports);
    if all {
        Ok(out)
    } else {
        Err(Failure::Relation(out))
    }
}

fn cmd_loop(relation: &str, c: &Common, tol: Option<f64>) -> Outcome {
    let ctx = context(c.n, tol)?;
    let rel: LoopRelation = relation.parse()?;
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let path = Weight::sample_regular(&mut rng, relation_path_len(rel));
    let spec = relation_loop(&ctx, rel, &path)?;
    let f = Functor::new(&ctx);
    let rep = f.verify_loop(&spec.name, &spec.start, &spec.moves, Sanity::Strict, spec.expected)?;
    let out = json!({
        "command": "groupoid loop",
        "relation": relation,
        "seed": c.seed,
        "moves": spec.moves.iter().map(|m| m.to_string()).collect::<Vec<_>>(),
        "report": rep,
    });
    if rep.passed {
        Ok(out)
    } else {
        Err(Failure::Relation(out))
    }
}

fn cmd_torus(alpha: f64, beta: f64, depth: usize, dot: Option<&PathBuf>) -> Outcome {
    let rep = opt_torus_explore(alpha, beta, depth)?;
    if let Some(p) = dot {
        std::fs::write(p, &rep.dot).map_err(|e| Failure::Config(format!("writing {}: {e}", p.display())))?;
    }
    let mut out = rep.to_json();
    out["command"] = json!("groupoid opt-torus");
    let ok = rep.strictly_increasing && rep.invariants_hold && !rep.lambda1_flip_ever_allowed;
    if ok {
        Ok(out)
    } else {
        Err(Failure::Relation(out))
    }
}

fn emit(v: &Value, output: Option<&PathBuf>) -> Result<(), String> {
    let text = serde_json::to_string_pretty(v).expect("serializable");
    let _ = writeln!(std::io::stdout().lock(), "{text}");
    if let Some(p) = output {
        std::fs::write(p, text + "\n").map_err(|e| format!("writing {}: {e}", p.display()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let tol = cli.tol;
    let result = match &cli.cmd {
        Cmd::Check {
            suite,
            common,
            samples,
            weights,
        } => cmd_check(suite, common, tol, *samples, weights.as_deref()),
        Cmd::Op {
            kind,
            common,
            l1,
            l2,
            l3,
            weights,
        } => cmd_op(kind, common, tol, [l1.as_deref(), l2.as_deref(), l3.as_deref()], weights.as_deref()),
        Cmd::Groupoid { cmd } => match cmd {
            GroupoidCmd::Ngon {
                sides,
                common,
                verify_all_loops,
                max_len,
                permissive,
            } => cmd_ngon(*sides, common, tol, *verify_all_loops, *max_len, *permissive),
            GroupoidCmd::Loop { relation, common } => cmd_loop(relation, common, tol),
            GroupoidCmd::OptTorus {
                alpha,
                beta,
                depth,
                dot,
            } => cmd_torus(*alpha, *beta, *depth, dot.as_ref()),
        },
    };
    let (value, code) = match result {
        Ok(v) => (v, 0),
        Err(Failure::Relation(v)) => (v, 1),
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    };
    if let Err(msg) = emit(&value, cli.output.as_ref()) {
        eprintln!("error: {msg}");
        return ExitCode::from(2);
    }
    ExitCode::from(code)
}
