use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dacnet::gradcheck::{draw_instance, DEFAULT_STEP};
use dacnet::verify::trial_rng;
use dacnet::{
    bp_reg, compare_gradients, finite_difference_gradient, load_dataset, load_model, run_verify,
    save_model, train, ActivationKind, Model, Topology, TrainConfig, VerifyConfig,
};

#[derive(Debug, Parser)]
#[command(
    name = "dacnet",
    version,
    about = "Multilayer perceptron gradients, training and verification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a regression network with online SGD.
    Train(TrainArgs),
    /// Print network outputs for inputs.
    Predict(PredictArgs),
    /// Compare backpropagation against finite differences on random instances.
    Gradcheck(GradcheckArgs),
    /// Run the randomized equivalence suite.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
struct ActivationArgs {
    #[arg(long, default_value = "tanh", value_parser = parse_activation)]
    hidden_activation: ActivationKind,
    #[arg(long, default_value = "identity", value_parser = parse_activation)]
    output_activation: ActivationKind,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// CSV with n input columns followed by m target columns.
    #[arg(long)]
    data: PathBuf,
    /// Layer widths, e.g. 2,3,1.
    #[arg(long, value_parser = parse_layers)]
    layers: Topology,
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[command(flatten)]
    activations: ActivationArgs,
    #[arg(long)]
    model_out: PathBuf,
    /// Skip the first CSV line.
    #[arg(long)]
    header: bool,
    /// Visit samples in file order every epoch.
    #[arg(long)]
    no_shuffle: bool,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// One input vector, comma separated.
    #[arg(long, conflicts_with = "data", required_unless_present = "data")]
    input: Option<String>,
    /// CSV of inputs; rows may also carry trailing target columns, which are ignored.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    header: bool,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    #[arg(long, value_parser = parse_layers)]
    layers: Topology,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = DEFAULT_STEP)]
    step: f64,
    #[arg(long, default_value_t = 20)]
    trials: usize,
    #[command(flatten)]
    activations: ActivationArgs,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 4)]
    max_layers: usize,
    #[arg(long, default_value_t = 6)]
    max_width: usize,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn parse_activation(s: &str) -> Result<ActivationKind, String> {
    s.parse().map_err(|e: dacnet::Error| e.to_string())
}

fn parse_layers(s: &str) -> Result<Topology, String> {
    let widths = s
        .split(',')
        .map(|tok| tok.trim().parse::<usize>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| format!("invalid layer width in `{s}`: {e}"))?;
    Topology::new(&widths).map_err(|e| e.to_string())
}

fn parse_row(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .map_err(|_| format!("`{}` is not a number", tok.trim()))
        })
        .collect()
}

type CmdResult = Result<bool, String>;

fn cmd_train(args: TrainArgs) -> CmdResult {
    let text = fs::read_to_string(&args.data)
        .map_err(|e| format!("cannot read {}: {e}", args.data.display()))?;
    let t = args.layers;
    let ds =
        load_dataset(&text, t.inputs(), t.outputs(), args.header).map_err(|e| e.to_string())?;
    let cfg = TrainConfig {
        learning_rate: args.lr,
        epochs: args.epochs,
        seed: args.seed,
        shuffle: !args.no_shuffle,
    };
    let (hidden, output) = (
        args.activations.hidden_activation,
        args.activations.output_activation,
    );
    let (w, history) = train(&t, &ds, &cfg, hidden, output).map_err(|e| e.to_string())?;
    for (k, e) in history.epoch_errors.iter().enumerate() {
        println!("epoch {} error {:?}", k + 1, e);
    }
    let model = Model::new(t, w, hidden, output).map_err(|e| e.to_string())?;
    fs::write(&args.model_out, save_model(&model))
        .map_err(|e| format!("cannot write {}: {e}", args.model_out.display()))?;
    Ok(true)
}

fn cmd_predict(args: PredictArgs) -> CmdResult {
    let text = fs::read_to_string(&args.model)
        .map_err(|e| format!("cannot read {}: {e}", args.model.display()))?;
    let model = load_model(&text).map_err(|e| e.to_string())?;
    let n = model.topology.inputs();
    let m = model.topology.outputs();

    let rows: Vec<Vec<f64>> = match (&args.input, &args.data) {
        (Some(input), _) => vec![parse_row(input)?],
        (None, Some(path)) => {
            let data = fs::read_to_string(path)
                .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
            let mut reader = csv::ReaderBuilder::new()
                .has_headers(args.header)
                .flexible(true)
                .trim(csv::Trim::All)
                .from_reader(data.as_bytes());
            let mut rows = Vec::new();
            for (k, rec) in reader.records().enumerate() {
                let rec = rec.map_err(|e| e.to_string())?;
                let mut row = parse_row(&rec.iter().collect::<Vec<_>>().join(","))
                    .map_err(|e| format!("row {}: {e}", k + 1))?;
                if row.len() == n + m {
                    row.truncate(n);
                }
                rows.push(row);
            }
            rows
        }
        (None, None) => unreachable!("clap requires --input or --data"),
    };

    let mut out = String::new();
    for (k, x) in rows.iter().enumerate() {
        if x.len() != n {
            return Err(format!(
                "dimension mismatch on input {}: model expects {n} inputs, got {}",
                k + 1,
                x.len()
            ));
        }
        let y = model.predict(x).map_err(|e| e.to_string())?;
        let cells: Vec<String> = y.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    print!("{out}");
    Ok(true)
}

fn cmd_gradcheck(args: GradcheckArgs) -> CmdResult {
    if args.trials == 0 {
        return Err("--trials must be at least 1".into());
    }
    let t = &args.layers;
    let (hidden, output) = (
        args.activations.hidden_activation,
        args.activations.output_activation,
    );
    let mut worst = 0.0f64;
    let mut passed = true;
    for trial in 0..args.trials {
        let mut rng = trial_rng(args.seed, trial);
        let inst = draw_instance(t, hidden, output, &mut rng).map_err(|e| e.to_string())?;
        let analytic = bp_reg(t, &inst.weights, &inst.input, &inst.target, hidden, output)
            .map_err(|e| e.to_string())?;
        let numeric = finite_difference_gradient(
            t,
            &inst.weights,
            &inst.input,
            &inst.target,
            hidden,
            output,
            args.step,
        )
        .map_err(|e| e.to_string())?;
        let report = compare_gradients(t, analytic.as_slice(), numeric.as_slice(), args.tol)
            .map_err(|e| e.to_string())?;
        println!("trial {} {}", trial + 1, report);
        if report.max_relative_error.is_nan() || report.max_relative_error > worst {
            worst = report.max_relative_error;
        }
        passed &= report.passed();
    }
    println!(
        "{} topology={} trials={} worst_rel_error={:e} tol={:e}",
        if passed { "PASS" } else { "FAIL" },
        t,
        args.trials,
        worst,
        args.tol
    );
    if !passed {
        eprintln!(
            "gradcheck failed: worst relative error {worst:e} exceeds {:e}",
            args.tol
        );
    }
    Ok(passed)
}

fn cmd_verify(args: VerifyArgs) -> CmdResult {
    let cfg = VerifyConfig {
        max_layers: args.max_layers,
        max_width: args.max_width,
        trials: args.trials,
        seed: args.seed,
        ..VerifyConfig::default()
    };
    let report = run_verify(&cfg).map_err(|e| e.to_string())?;
    println!("{report}");
    for p in report.properties.iter().filter(|p| !p.passed()) {
        if let Some(f) = &p.failure {
            eprintln!(
                "property `{}` violated: topology {} seed {} trial {}",
                p.name, f.topology, f.seed, f.trial
            );
        }
    }
    Ok(report.passed())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Predict(args) => cmd_predict(args),
        Command::Gradcheck(args) => cmd_gradcheck(args),
        Command::Verify(args) => cmd_verify(args),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
