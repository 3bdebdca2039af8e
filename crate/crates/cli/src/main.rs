// SPDX-License-Identifier: Apache-2.0

//! `hectorv`: assembler, trustlet toolchain and scenario runner.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use hectorv::scfp::asm::assemble;
use hectorv::scfp::image::decrypt_walk;
use hectorv::scfp::{build_trustlet, ClaimSpec, KeyIv, TrustletImage};
use hectorv::soc::{Machine, SocConfig, Trace};

const EX_DATAERR: u8 = 65;
const EX_USAGE: u8 = 64;
const EX_NOINPUT: u8 = 66;
const EX_CANTCREAT: u8 = 73;

#[derive(Parser)]
#[command(name = "hectorv", version, about = "TEE SoC simulator and trustlet toolchain")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    /// One `0x`-prefixed word per line.
    Hex,
    /// Little-endian bytes.
    Bin,
}

#[derive(Subcommand)]
enum Cmd {
    /// Assemble a source file.
    Asm {
        src: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, value_enum, default_value = "hex")]
        format: Format,
    },
    /// Encrypt a program along its control-flow graph and wrap it with a
    /// boot stub.
    BuildTrustlet {
        src: PathBuf,
        #[arg(long, value_parser = parse_hex64)]
        key: u64,
        #[arg(long, value_parser = parse_hex64)]
        iv: u64,
        /// JSON list of `{"device", "state" | "peripheral"}` claims.
        #[arg(long)]
        claims: Option<PathBuf>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Build and run a scenario.
    Run {
        config: PathBuf,
        /// Write the JSONL trace here.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Leave individual bus transactions out of the trace.
        #[arg(long)]
        no_bus: bool,
        #[arg(long)]
        max_ticks: Option<u64>,
    },
    /// Decrypt an image offline and check every patch record.
    VerifyImage {
        image: PathBuf,
        #[arg(long, value_parser = parse_hex64)]
        key: u64,
        /// Source the image was built from; the decrypted body must match it.
        #[arg(long)]
        expect: Option<PathBuf>,
    },
}

fn parse_hex64(s: &str) -> Result<u64, String> {
    let t = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")).unwrap_or(s);
    if t.is_empty() || t.len() > 16 {
        return Err(format!("expected up to 16 hex digits, got `{s}`"));
    }
    u64::from_str_radix(t, 16).map_err(|e| e.to_string())
}

struct Failure {
    code: u8,
    msg: String,
}

fn fail(code: u8, msg: impl Into<String>) -> Failure {
    Failure {
        code,
        msg: msg.into(),
    }
}

fn read(p: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(p).map_err(|e| fail(EX_NOINPUT, format!("{}: {e}", p.display())))
}

fn read_text(p: &Path) -> Result<String, Failure> {
    String::from_utf8(read(p)?).map_err(|e| fail(EX_DATAERR, format!("{}: {e}", p.display())))
}

fn write(p: &Path, bytes: &[u8]) -> Result<(), Failure> {
    fs::write(p, bytes).map_err(|e| fail(EX_CANTCREAT, format!("{}: {e}", p.display())))
}

fn run(cmd: Cmd) -> Result<u8, Failure> {
    match cmd {
        Cmd::Asm {
            src,
            output,
            format,
        } => {
            let text = read_text(&src)?;
            let prog = assemble(&text)
                .map_err(|e| fail(EX_DATAERR, format!("{}:{e}", src.display())))?;
            let bytes = match format {
                Format::Bin => prog.to_le_bytes(),
                Format::Hex => prog
                    .words
                    .iter()
                    .map(|w| format!("{w:#010x}\n"))
                    .collect::<String>()
                    .into_bytes(),
            };
            write(&output, &bytes)?;
            Ok(0)
        }
        Cmd::BuildTrustlet {
            src,
            key,
            iv,
            claims,
            output,
        } => {
            let text = read_text(&src)?;
            let claims = match claims {
                Some(p) => ClaimSpec::parse_list(&read_text(&p)?)
                    .map_err(|e| fail(EX_DATAERR, format!("{}: {e}", p.display())))?,
                None => Vec::new(),
            };
            let built = build_trustlet(&text, KeyIv::new(key, iv), &claims)
                .map_err(|e| fail(EX_DATAERR, format!("{}: {e}", src.display())))?;
            write(&output, &built.image.to_bytes())?;
            eprintln!(
                "{}: {} stub + {} body words, {} patches",
                output.display(),
                built.image.stub.len(),
                built.image.body.len(),
                built.image.patches.len()
            );
            Ok(0)
        }
        Cmd::Run {
            config,
            trace,
            no_bus,
            max_ticks,
        } => {
            let text = read_text(&config)?;
            let cfg = SocConfig::from_json(&text)
                .map_err(|e| fail(EX_DATAERR, format!("{}: {e}", config.display())))?;
            let base = config.parent().unwrap_or(Path::new("."));
            let mut m = Machine::from_config(&cfg, base, Trace::new(trace.is_some(), !no_bus))
                .map_err(|e| {
                    let code = match e {
                        hectorv::soc::SocError::Io { .. } => EX_NOINPUT,
                        _ => EX_DATAERR,
                    };
                    fail(code, e.to_string())
                })?;
            let out = m.run(max_ticks.unwrap_or(cfg.max_ticks));
            if let Some(p) = trace {
                write(&p, m.trace.to_jsonl().as_bytes())?;
            }
            let uart = m.uart_text();
            if !uart.is_empty() {
                eprint!("{uart}");
            }
            println!("{}", serde_json::to_string(&out).expect("outcome serializes"));
            Ok(out.verdict.exit_code() as u8)
        }
        Cmd::VerifyImage { image, key, expect } => {
            let bytes = read(&image)?;
            let img = TrustletImage::from_bytes(&bytes)
                .map_err(|e| fail(EX_DATAERR, format!("{}: {e}", image.display())))?;
            let walk = match decrypt_walk(&img, key) {
                Ok(w) => w,
                Err(e) => {
                    eprintln!("{}: {e}", image.display());
                    return Ok(1);
                }
            };
            if let Some(src) = expect {
                let prog = assemble(&read_text(&src)?)
                    .map_err(|e| fail(EX_DATAERR, format!("{}:{e}", src.display())))?;
                let differs = walk.states.keys().any(|&pc| {
                    let i = ((pc - img.entry) / 4) as usize;
                    prog.word_at(pc) != walk.plaintext.get(i).copied()
                });
                if differs {
                    eprintln!("{}: decrypted body differs from {}", image.display(), src.display());
                    return Ok(1);
                }
            }
            println!(
                "{}: ok, {} instructions reached, {} patches checked",
                image.display(),
                walk.instructions(),
                img.patches.len()
            );
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EX_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.cmd) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("hectorv: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
