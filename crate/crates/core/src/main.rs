//! Thin command-line front end over the pipeline functions.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use sasr::config::{apply_overrides, ExperimentConfig};
use sasr::pipeline;

const USAGE: &str = "\
sasr — speaker-adaptive speech recognition at desk scale

USAGE:
    sasr <command> [options]

COMMANDS:
    generate      synthesize a severity-tiered corpus
                    --out DIR [--config PATH] [--seed N] [--set k=v ...]
    pretrain      train a fresh encoder on a corpus with CTC
                    --corpus DIR --out DIR [--config PATH] [--seed N]
    extract       derive auxiliary speaker features
                    fmllr|xvector --corpus DIR --out DIR
                    [--ckpt FILE (required for fmllr)] [--config PATH] [--seed N]
    finetune      finetune a checkpoint, optionally with adapters
                    --ckpt FILE --corpus DIR [--corpus2 DIR] --out DIR
                    [--aux none|fmllr|xvector|both] [--fmllr FILE] [--xvectors FILE]
                    [--config PATH] [--seed N]
    score         report WER per severity tier on a test manifest
                    --ckpt FILE --manifest FILE
                    [--fmllr FILE] [--xvectors FILE] [--compare FILE]
    sweep-blocks  train one x-vector adapter per block and emit a CSV
                    --ckpt FILE --corpus DIR --xvectors FILE --blocks 1,2,6
                    --out DIR [--config PATH] [--seed N]

COMMON OPTIONS:
    --config PATH   sectioned key=value experiment configuration
    --set k=v       override one config value (section.key=value), repeatable
    --seed N        random seed (default 0)
    --out DIR       output directory
";

struct Args {
    flags: Vec<(String, String)>,
    positional: Vec<String>,
}

impl Args {
    fn parse(argv: &[String]) -> Result<Args, String> {
        let mut flags = Vec::new();
        let mut positional = Vec::new();
        let mut i = 0;
        while i < argv.len() {
            let a = &argv[i];
            if let Some(name) = a.strip_prefix("--") {
                let value = argv
                    .get(i + 1)
                    .ok_or_else(|| format!("flag --{name} needs a value"))?
                    .clone();
                flags.push((name.to_string(), value));
                i += 2;
            } else {
                positional.push(a.clone());
                i += 1;
            }
        }
        Ok(Args { flags, positional })
    }

    fn get(&self, name: &str) -> Option<&str> {
        self.flags.iter().rev().find(|(n, _)| n == name).map(|(_, v)| v.as_str())
    }

    fn all(&self, name: &str) -> Vec<String> {
        self.flags.iter().filter(|(n, _)| n == name).map(|(_, v)| v.clone()).collect()
    }

    fn require(&self, name: &str) -> Result<&str, String> {
        self.get(name).ok_or_else(|| format!("missing required flag --{name}"))
    }

    fn path(&self, name: &str) -> Result<PathBuf, String> {
        Ok(PathBuf::from(self.require(name)?))
    }

    fn seed(&self) -> Result<u64, String> {
        match self.get("seed") {
            None => Ok(0),
            Some(v) => v.parse().map_err(|_| format!("--seed: not an integer: {v}")),
        }
    }
}

fn load_config(args: &Args) -> Result<ExperimentConfig, String> {
    let mut cfg = match args.get("config") {
        Some(path) => ExperimentConfig::load(Path::new(path)).map_err(|e| e.to_string())?,
        None => ExperimentConfig::desk_scale(),
    };
    apply_overrides(&mut cfg, &args.all("set")).map_err(|e| e.to_string())?;
    Ok(cfg)
}

fn run(argv: Vec<String>) -> Result<(), String> {
    let Some(command) = argv.first().cloned() else {
        return Err(USAGE.to_string());
    };
    let args = Args::parse(&argv[1..])?;
    let seed = args.seed()?;
    match command.as_str() {
        "generate" => {
            let cfg = load_config(&args)?;
            let out = args.path("out")?;
            let stats = pipeline::cmd_generate(&cfg.corpus, seed, &out).map_err(|e| e.to_string())?;
            print!("{stats}");
            println!("corpus written to {}", out.display());
        }
        "pretrain" => {
            let cfg = load_config(&args)?;
            let corpus = args.path("corpus")?;
            let out = args.path("out")?;
            let log = pipeline::cmd_pretrain(&cfg, &corpus, seed, &out).map_err(|e| e.to_string())?;
            if let Some(last) = log.epochs.last() {
                println!(
                    "pretrained {} epochs; final dev WER {:.2}%",
                    last.epoch,
                    100.0 * last.dev_wer.overall
                );
            }
            println!("checkpoint written to {}", out.join(pipeline::CHECKPOINT_FILE).display());
        }
        "extract" => {
            let kind = args
                .positional
                .first()
                .ok_or("extract needs a kind: fmllr or xvector")?
                .clone();
            let cfg = load_config(&args)?;
            let corpus = args.path("corpus")?;
            let out = args.path("out")?;
            match kind.as_str() {
                "fmllr" => {
                    let ckpt = args.path("ckpt")?;
                    pipeline::cmd_extract_fmllr(&cfg, &ckpt, &corpus, seed, &out)
                        .map_err(|e| e.to_string())?;
                    println!("fMLLR archive written to {}", out.join(pipeline::FMLLR_FILE).display());
                }
                "xvector" => {
                    pipeline::cmd_extract_xvector(&cfg, &corpus, seed, &out)
                        .map_err(|e| e.to_string())?;
                    println!(
                        "embeddings written to {}",
                        out.join(pipeline::XVECTORS_FILE).display()
                    );
                }
                other => return Err(format!("unknown extract kind: {other}")),
            }
        }
        "finetune" => {
            let mut cfg = load_config(&args)?;
            if let Some(aux) = args.get("aux") {
                cfg.set("adapter.aux", aux).map_err(|e| e.to_string())?;
            }
            let ckpt = args.path("ckpt")?;
            let mut corpora = vec![args.path("corpus")?];
            if let Some(second) = args.get("corpus2") {
                corpora.push(PathBuf::from(second));
            }
            let out = args.path("out")?;
            let fmllr = args.get("fmllr").map(PathBuf::from);
            let xvec = args.get("xvectors").map(PathBuf::from);
            let log = pipeline::cmd_finetune(
                &cfg,
                &ckpt,
                &corpora,
                fmllr.as_deref(),
                xvec.as_deref(),
                seed,
                &out,
            )
            .map_err(|e| e.to_string())?;
            if let Some(last) = log.epochs.last() {
                println!(
                    "finetuned {} epochs ({}); final dev WER {:.2}%",
                    last.epoch,
                    cfg.aux.as_str(),
                    100.0 * last.dev_wer.overall
                );
            }
            println!("checkpoint written to {}", out.join(pipeline::CHECKPOINT_FILE).display());
        }
        "score" => {
            let ckpt = args.path("ckpt")?;
            let manifest = args.path("manifest")?;
            let fmllr = args.get("fmllr").map(PathBuf::from);
            let xvec = args.get("xvectors").map(PathBuf::from);
            let compare = args.get("compare").map(PathBuf::from);
            let report = pipeline::cmd_score(
                &ckpt,
                &manifest,
                fmllr.as_deref(),
                xvec.as_deref(),
                compare.as_deref(),
            )
            .map_err(|e| e.to_string())?;
            print!("{report}");
        }
        "sweep-blocks" => {
            let cfg = load_config(&args)?;
            let ckpt = args.path("ckpt")?;
            let corpus = args.path("corpus")?;
            let xvec = args.path("xvectors")?;
            let out = args.path("out")?;
            let blocks: Vec<usize> = args
                .require("blocks")?
                .split(',')
                .map(|b| b.trim().parse::<usize>().map_err(|_| format!("bad block index: {b}")))
                .collect::<Result<_, _>>()?;
            let csv =
                pipeline::cmd_sweep_blocks(&cfg, &ckpt, &corpus, &xvec, &blocks, seed, &out)
                    .map_err(|e| e.to_string())?;
            print!("{csv}");
            println!("sweep written to {}", out.join("sweep.csv").display());
        }
        "help" | "--help" | "-h" => {
            print!("{USAGE}");
        }
        other => return Err(format!("unknown command: {other}\n\n{USAGE}")),
    }
    Ok(())
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    match run(argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("{msg}");
            ExitCode::FAILURE
        }
    }
}
