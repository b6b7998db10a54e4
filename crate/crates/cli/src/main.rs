//! Command-line front end: synthetic model generation, sparse generation
//! runs, the validator suite, FLOPs reports and plot-data export.
//!
//! Exit codes: 0 success, 2 validation failure, 3 invalid parameter,
//! 4 I/O or file-format error, 5 internal error.

mod manifest;
mod prompts;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use corematch::criteria::{self, ValidatorConfig, Verdict};
use corematch::engine::{self, FlopsConfig, SparsityParams};
use corematch::error::{CoreError, Result};
use corematch::model::{self, ModelConfig, Weights};
use corematch::numerics::ActivationKind;
use corematch::sparsity;

use manifest::Manifest;

#[derive(Parser)]
#[command(
    name = "corematch",
    about = "Co-adaptive token and neuron pruning on a synthetic decoder, with validators",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic model with controllable weight orthogonality.
    GenModel(GenModelArgs),
    /// Run sparse generation and report cost.
    Run(RunArgs),
    /// Run the full validator suite over a fresh trace.
    Validate(ValidateArgs),
    /// Closed-form FLOPs/memory report for a model preset.
    Flops(FlopsArgs),
    /// Export plot-ready CSVs (scores, frequency tables, binned trends).
    PlotData(PlotDataArgs),
}

#[derive(Args)]
struct GenModelArgs {
    #[arg(long, default_value_t = 4)]
    layers: usize,
    #[arg(long, default_value_t = 32)]
    dmodel: usize,
    #[arg(long, default_value_t = 128)]
    dffn: usize,
    #[arg(long, default_value_t = 4)]
    heads: usize,
    #[arg(long, default_value_t = 256)]
    vocab: usize,
    #[arg(long, default_value_t = 128)]
    max_seq: usize,
    /// Activation function: relu or silu.
    #[arg(long, default_value = "relu")]
    activation: String,
    /// Orthogonality mix in [0,1]: 1 = exactly scaled-orthogonal weights.
    #[arg(long, default_value_t = 1.0)]
    ortho: f64,
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Output weight file path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct PromptArgs {
    /// Explicit comma-separated token ids.
    #[arg(long, conflicts_with_all = ["prompt_len", "prompt_clustered"])]
    prompt_ids: Option<String>,
    /// Length of a seeded random prompt.
    #[arg(long, requires = "prompt_seed")]
    prompt_len: Option<usize>,
    #[arg(long)]
    prompt_seed: Option<u64>,
    /// Use the standard clustered analysis prompt (34 tokens, vocab >= 256).
    #[arg(long, conflicts_with = "prompt_len")]
    prompt_clustered: bool,
}

impl PromptArgs {
    fn build(&self, vocab: usize) -> Result<Vec<u32>> {
        if let Some(ids) = &self.prompt_ids {
            return prompts::parse_prompt_ids(ids);
        }
        if self.prompt_clustered {
            return prompts::clustered_prompt(vocab);
        }
        if let Some(len) = self.prompt_len {
            let seed = self.prompt_seed.unwrap_or(0);
            return Ok(prompts::random_prompt(len, seed, vocab));
        }
        Err(CoreError::InvalidParam(
            "no prompt given: use --prompt-ids, --prompt-len/--prompt-seed or --prompt-clustered"
                .into(),
        ))
    }

    fn describe(&self) -> String {
        if let Some(ids) = &self.prompt_ids {
            format!("ids:{ids}")
        } else if self.prompt_clustered {
            "clustered".into()
        } else if let Some(len) = self.prompt_len {
            format!("random:len={len},seed={}", self.prompt_seed.unwrap_or(0))
        } else {
            "none".into()
        }
    }
}

#[derive(Args, Clone)]
struct SparsityArgs {
    #[arg(long, default_value_t = 0.2)]
    rho: f64,
    #[arg(long, default_value_t = 0.4)]
    beta: f64,
    #[arg(long, default_value_t = 2)]
    prune_layer: usize,
    /// Prunable token range start:end (half-open). Protected outside.
    #[arg(long)]
    prunable_span: Option<String>,
    #[arg(long)]
    no_token_prune: bool,
    #[arg(long)]
    no_neuron_sparse: bool,
    /// Also evict pruned tokens from pre-prune-layer KV caches.
    #[arg(long)]
    evict_early_kv: bool,
}

impl SparsityArgs {
    fn build(&self) -> Result<SparsityParams> {
        let span = match &self.prunable_span {
            Some(s) => prompts::parse_span(s)?,
            None => (0, 0),
        };
        Ok(SparsityParams {
            rho: self.rho,
            beta: self.beta,
            prune_layer: self.prune_layer,
            prunable_span: span,
            enable_token_pruning: !self.no_token_prune,
            enable_neuron_sparsity: !self.no_neuron_sparse,
            keep_pruned_in_early_kv: !self.evict_early_kv,
        })
    }
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    prompt: PromptArgs,
    #[command(flatten)]
    sparsity: SparsityArgs,
    #[arg(long, default_value_t = 16)]
    max_new: usize,
    /// Output directory for generation.json, selection.csv, manifest.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    prompt: PromptArgs,
    /// Attention layer under analysis (matching uses the FFN one layer up).
    #[arg(long, default_value_t = 2)]
    layer: usize,
    #[arg(long, default_value_t = 0.2)]
    rho: f64,
    #[arg(long, default_value_t = 0.4)]
    beta: f64,
    #[arg(long, default_value_t = 0.05)]
    obs1_max_deviation: f64,
    #[arg(long, default_value_t = 0.8)]
    obs2_min_pearson: f64,
    #[arg(long, default_value_t = 0.6)]
    insight1_min_spearman: f64,
    #[arg(long, default_value_t = 0.8)]
    insight2_min_pearson: f64,
    #[arg(long, default_value_t = 0.6)]
    matching_min_spearman: f64,
    #[arg(long, default_value_t = 0.6)]
    matching_min_top16: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FlopsArgs {
    /// Model preset: llava7b, llava13b or custom.
    #[arg(long, default_value = "llava7b")]
    preset: String,
    #[arg(long, default_value_t = 675)]
    prompt: usize,
    /// Surviving image tokens after the pruning layer.
    #[arg(long)]
    kept: Option<usize>,
    #[arg(long, default_value_t = 2)]
    prune_layer: usize,
    #[arg(long, default_value_t = 0.4)]
    beta: f64,
    #[arg(long, default_value_t = 0)]
    generated: usize,
    /// Prompt tokens eligible for pruning (defaults to the preset's count).
    #[arg(long)]
    image_tokens: Option<usize>,
    // Custom preset dimensions.
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    dmodel: Option<usize>,
    #[arg(long)]
    dffn: Option<usize>,
    #[arg(long)]
    vocab: Option<usize>,
    #[arg(long)]
    gated: Option<bool>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PlotDataArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    prompt: PromptArgs,
    #[arg(long, default_value_t = 2)]
    layer: usize,
    #[arg(long, default_value_t = 0.2)]
    rho: f64,
    #[arg(long, default_value_t = 0.4)]
    beta: f64,
    /// Prunable span for the selection preview (defaults to all but last).
    #[arg(long)]
    prunable_span: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

fn load_model(path: &Path) -> Result<Weights> {
    model::load_weights(path)
}

fn cmd_gen_model(args: &GenModelArgs) -> Result<i32> {
    let activation_kind = match args.activation.as_str() {
        "relu" => ActivationKind::Relu,
        "silu" => ActivationKind::Silu,
        other => {
            return Err(CoreError::InvalidParam(format!(
                "unknown activation '{other}' (expected relu or silu)"
            )))
        }
    };
    let config = ModelConfig {
        n_layers: args.layers,
        d_model: args.dmodel,
        d_ffn: args.dffn,
        n_heads: args.heads,
        vocab_size: args.vocab,
        activation_kind,
        max_seq_len: args.max_seq,
    };
    let weights = model::init_synthetic(config, args.seed, args.ortho, args.scale)?;
    model::save_weights(&weights, &args.out)?;

    let summary = criteria::validate_observation1(&weights, &ValidatorConfig::default());
    println!(
        "wrote {} (layers={} d_model={} d_ffn={} heads={} vocab={} seed={} mix={} scale={})",
        args.out.display(),
        args.layers,
        args.dmodel,
        args.dffn,
        args.heads,
        args.vocab,
        args.seed,
        args.ortho,
        args.scale
    );
    println!("orthogonality deviation per layer (gram vs scaled identity):");
    println!("{:<7}{:>12}{:>12}{:>12}{:>12}", "layer", "qk", "wv", "wd", "wo");
    for i in 0..args.layers {
        let get = |tag: &str| {
            summary
                .details
                .get(&format!("layer{i}.{tag}_deviation"))
                .map(|d| format!("{d:.3e}"))
                .unwrap_or_else(|| "degenerate".into())
        };
        let qk = summary
            .details
            .get(&format!("layer{i}.qk_deviation"))
            .map(|d| format!("{d:.3e}"))
            .unwrap_or_else(|| "degenerate".into());
        println!("{:<7}{:>12}{:>12}{:>12}{:>12}", i, qk, get("wv"), get("wd"), get("wo"));
    }
    if let Some(max) = summary.details.get("max_deviation") {
        println!("max deviation: {max:.3e}");
    }
    Ok(0)
}

fn cmd_run(args: &RunArgs) -> Result<i32> {
    let weights = load_model(&args.model)?;
    let prompt = args.prompt.build(weights.config.vocab_size)?;
    let params = args.sparsity.build()?;
    let (output, state, _trace) = engine::generate(&weights, &prompt, &params, args.max_new)?;

    println!(
        "generated {} tokens: {:?}",
        output.tokens.len(),
        output.tokens
    );
    println!(
        "kept {}/{} prompt tokens (threshold {:?}, degenerate={})",
        output.prefill.n_kept,
        output.prefill.n_prompt,
        output.prefill.threshold,
        output.prefill.degenerate_pruning
    );
    println!(
        "prefill flops ratio {:.4}, decode ratio {:.4}, kv ratio {:.4}",
        output.cost.prefill_ratio(),
        output.cost.decode_ratio(),
        output.cost.kv_ratio()
    );

    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(
            dir.join("generation.json"),
            serde_json::to_string_pretty(&output).expect("serializes") + "\n",
        )?;
        if let Some(sel) = &state.selection {
            std::fs::write(dir.join("selection.csv"), sparsity::selection_csv(sel))?;
            let layer = params.prune_layer;
            std::fs::write(
                dir.join("freq_table.csv"),
                sparsity::frequency_table_csv(
                    &state.frequency_tables[layer],
                    &state.core_sets[layer],
                ),
            )?;
        }
        let mut m = Manifest::new("run");
        m.arg("model", args.model.display())
            .arg("prompt", args.prompt.describe())
            .arg("rho", params.rho)
            .arg("beta", params.beta)
            .arg("prune_layer", params.prune_layer)
            .arg(
                "prunable_span",
                format!("{}:{}", params.prunable_span.0, params.prunable_span.1),
            )
            .arg("token_pruning", params.enable_token_pruning)
            .arg("neuron_sparsity", params.enable_neuron_sparsity)
            .arg("keep_early_kv", params.keep_pruned_in_early_kv)
            .arg("max_new", args.max_new)
            .arg("model_seed", weights.seed);
        m.write(dir)?;
    }
    Ok(0)
}

fn write_bins_csv(path: &Path, bins: &[corematch::numerics::Bin]) -> std::io::Result<()> {
    let mut out = String::from("# schema cm.bins v1\nlo,hi,mean_x,mean_y,count\n");
    for b in bins {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            b.lo, b.hi, b.mean_x, b.mean_y, b.count
        ));
    }
    std::fs::write(path, out)
}

fn cmd_validate(args: &ValidateArgs) -> Result<i32> {
    let weights = load_model(&args.model)?;
    let prompt = args.prompt.build(weights.config.vocab_size)?;
    if args.layer >= weights.config.n_layers || args.layer == 0 {
        return Err(CoreError::InvalidParam(format!(
            "--layer {} out of range (need 1..{})",
            args.layer,
            weights.config.n_layers - 1
        )));
    }
    let cfg = ValidatorConfig {
        obs1_max_deviation: args.obs1_max_deviation,
        obs2_min_pearson: args.obs2_min_pearson,
        insight1_min_spearman: args.insight1_min_spearman,
        insight2_min_pearson: args.insight2_min_pearson,
        matching_min_spearman: args.matching_min_spearman,
        matching_min_top16_overlap: args.matching_min_top16,
        ..Default::default()
    };

    let (_, trace) = model::forward_dense(&weights, &prompt)?;
    let m = prompt.len() - 1;
    let layer = args.layer;
    let upstream = trace.layer(layer - 1).expect("checked above");
    let (_, core) =
        sparsity::sentence_core_neurons(&upstream.ffn_activations, args.rho, args.beta, layer - 1)?;

    let mut summaries = vec![criteria::validate_observation1(&weights, &cfg)];
    summaries.push(criteria::validate_observation2(
        &trace,
        layer,
        criteria::PairMode::AllPairs,
        &cfg,
    )?);
    summaries.push(criteria::validate_insight1(
        &trace,
        layer,
        m,
        Some(&weights),
        &cfg,
    )?);
    summaries.push(criteria::validate_insight2(&trace, layer, &weights, &cfg)?);
    summaries.push(criteria::validate_matching(&trace, layer, m, &core, &cfg)?);

    let n = prompt.len();
    let prefixes = [n / 4, n / 2, 3 * n / 4, n];
    let stability = criteria::prefix_core_stability(
        &weights,
        &prompt,
        layer - 1,
        args.rho,
        args.beta,
        &prefixes,
    )?;

    let mut all_passed = true;
    for s in &summaries {
        let verdict = match s.verdict {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Insufficient => "INSUFFICIENT",
        };
        if s.verdict != Verdict::Pass {
            all_passed = false;
        }
        println!(
            "{verdict:<13} {} (pearson={:?} spearman={:?} threshold={} n={})",
            s.name, s.pearson_r, s.spearman_r, s.threshold, s.sample_count
        );
        for note in &s.notes {
            println!("              note: {note}");
        }
    }
    println!("prefix core-set stability (len, jaccard vs full): {stability:?}");

    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir)?;
        let report = serde_json::json!({
            "schema_version": 1u32,
            "layer": layer,
            "reference_token": m,
            "summaries": summaries,
            "prefix_core_stability": stability,
            "all_passed": all_passed,
        });
        std::fs::write(
            dir.join("validators.json"),
            serde_json::to_string_pretty(&report).expect("serializes") + "\n",
        )?;
        let scores = criteria::criterion_report(&trace, layer, m, &core)?;
        std::fs::write(dir.join("scores.csv"), criteria::criterion_report_csv(&scores))?;
        for s in &summaries {
            if !s.bins.is_empty() {
                write_bins_csv(&dir.join(format!("{}_bins.csv", s.name)), &s.bins)?;
            }
        }
        let mut man = Manifest::new("validate");
        man.arg("model", args.model.display())
            .arg("prompt", args.prompt.describe())
            .arg("layer", layer)
            .arg("rho", args.rho)
            .arg("beta", args.beta)
            .arg("model_seed", weights.seed);
        man.write(dir)?;
    }

    Ok(if all_passed { 0 } else { 2 })
}

fn cmd_flops(args: &FlopsArgs) -> Result<i32> {
    let mut cfg = match args.preset.as_str() {
        "llava7b" => FlopsConfig::llava7b(),
        "llava13b" => FlopsConfig::llava13b(),
        "custom" => {
            let need = |v: Option<usize>, what: &str| {
                v.ok_or_else(|| {
                    CoreError::InvalidParam(format!("--{what} required with --preset custom"))
                })
            };
            FlopsConfig {
                n_layers: need(args.layers, "layers")?,
                d_model: need(args.dmodel, "dmodel")?,
                d_ffn: need(args.dffn, "dffn")?,
                n_heads: 1,
                vocab_size: need(args.vocab, "vocab")?,
                gated_ffn: args.gated.unwrap_or(false),
                image_tokens: args.image_tokens.unwrap_or(0),
            }
        }
        other => {
            return Err(CoreError::InvalidParam(format!(
                "unknown preset '{other}' (expected llava7b, llava13b or custom)"
            )))
        }
    };
    if let Some(img) = args.image_tokens {
        cfg.image_tokens = img;
    }
    if cfg.image_tokens > args.prompt {
        return Err(CoreError::InvalidParam(format!(
            "image tokens {} exceed prompt {}",
            cfg.image_tokens, args.prompt
        )));
    }

    // --kept counts surviving image tokens; everything else always survives.
    let n_kept = match args.kept {
        Some(kept_images) => {
            if kept_images > cfg.image_tokens {
                return Err(CoreError::InvalidParam(format!(
                    "kept image tokens {kept_images} exceed image tokens {}",
                    cfg.image_tokens
                )));
            }
            args.prompt - cfg.image_tokens + kept_images
        }
        None => args.prompt,
    };
    let report = engine::flops_model(
        &cfg,
        args.prompt,
        n_kept,
        args.prune_layer,
        args.beta,
        args.generated,
    )?;
    let memory = engine::memory_model(&cfg, args.prompt, n_kept, args.beta, 2)?;

    println!(
        "prefill: dense {:.3} TFLOPs, sparse {:.3} TFLOPs (ratio {:.4})",
        report.prefill_flops_dense / 1e12,
        report.prefill_flops_sparse / 1e12,
        report.prefill_ratio()
    );
    println!(
        "decode/token: dense {:.3} GFLOPs, sparse {:.3} GFLOPs (ratio {:.4})",
        report.decode_flops_per_token_dense / 1e9,
        report.decode_flops_per_token_sparse / 1e9,
        report.decode_ratio()
    );
    println!(
        "kv entries ratio {:.4}, kv bytes ratio {:.4}, resident ffn fraction {:.2}",
        report.kv_ratio(),
        memory.kv_ratio(),
        memory.ffn_ratio()
    );

    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir)?;
        let bundle = serde_json::json!({ "flops": report, "memory": memory });
        std::fs::write(
            dir.join("cost.json"),
            serde_json::to_string_pretty(&bundle).expect("serializes") + "\n",
        )?;
        let mut man = Manifest::new("flops");
        man.arg("preset", &args.preset)
            .arg("prompt", args.prompt)
            .arg("kept", format!("{:?}", args.kept))
            .arg("prune_layer", args.prune_layer)
            .arg("beta", args.beta)
            .arg("generated", args.generated);
        man.write(dir)?;
    }
    Ok(0)
}

fn cmd_plot_data(args: &PlotDataArgs) -> Result<i32> {
    let weights = load_model(&args.model)?;
    let prompt = args.prompt.build(weights.config.vocab_size)?;
    if args.layer == 0 || args.layer >= weights.config.n_layers {
        return Err(CoreError::InvalidParam(format!(
            "--layer {} out of range (need 1..{})",
            args.layer,
            weights.config.n_layers - 1
        )));
    }
    let (_, trace) = model::forward_dense(&weights, &prompt)?;
    let m = prompt.len() - 1;
    let layer = args.layer;
    let upstream = trace.layer(layer - 1).expect("checked");
    let (freq, core) =
        sparsity::sentence_core_neurons(&upstream.ffn_activations, args.rho, args.beta, layer - 1)?;

    std::fs::create_dir_all(&args.out)?;
    std::fs::write(
        args.out.join("freq_table.csv"),
        sparsity::frequency_table_csv(&freq, &core),
    )?;

    let report = criteria::criterion_report(&trace, layer, m, &core)?;
    std::fs::write(
        args.out.join("scores.csv"),
        criteria::criterion_report_csv(&report),
    )?;

    // Selection preview over the declared span (whole prompt by default).
    let span = match &args.prunable_span {
        Some(s) => prompts::parse_span(s)?,
        None => (0, prompt.len()),
    };
    let protected: Vec<usize> = (0..prompt.len())
        .filter(|&i| i < span.0 || i >= span.1 || i == prompt.len() - 1)
        .collect();
    let counts = &report.intersection_counts;
    let selection = sparsity::select_core_tokens(counts, &protected, layer - 1)?;
    std::fs::write(
        args.out.join("selection.csv"),
        sparsity::selection_csv(&selection),
    )?;

    let cfg = ValidatorConfig::default();
    let obs2 = criteria::validate_observation2(&trace, layer, criteria::PairMode::AllPairs, &cfg)?;
    write_bins_csv(&args.out.join("observation2_bins.csv"), &obs2.bins)?;
    let matching = criteria::validate_matching(&trace, layer, m, &core, &cfg)?;
    write_bins_csv(&args.out.join("matching_bins.csv"), &matching.bins)?;

    let mut man = Manifest::new("plot-data");
    man.arg("model", args.model.display())
        .arg("prompt", args.prompt.describe())
        .arg("layer", layer)
        .arg("rho", args.rho)
        .arg("beta", args.beta)
        .arg("span", format!("{}:{}", span.0, span.1))
        .arg("model_seed", weights.seed);
    man.write(&args.out)?;
    println!("wrote plot data to {}", args.out.display());
    Ok(0)
}

fn dispatch(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::GenModel(args) => cmd_gen_model(args),
        Command::Run(args) => cmd_run(args),
        Command::Validate(args) => cmd_validate(args),
        Command::Flops(args) => cmd_flops(args),
        Command::PlotData(args) => cmd_plot_data(args),
    }
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("CM_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            corematch::par::limit_threads(n.max(1));
        }
    }
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help/version requests are not errors.
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            eprint!("{e}");
            return ExitCode::from(3);
        }
    };
    match dispatch(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            eprintln!("run with --help for usage");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
