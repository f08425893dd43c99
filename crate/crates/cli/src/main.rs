use std::fs;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use adapt_forge::catalog::UserProfile;
use adapt_forge::rules::parse_rule_set;
use adapt_forge::service::{BackendChoice, JobStatus};
use adapt_forge::trace::ReportFormat;
use adapt_forge_server::{
    build_service, gate_check, load_config, read_candidate, read_input, router, AppState,
};
use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "adapt-forge",
    version,
    about = "Accessible UI adaptation engine"
)]
struct Cli {
    /// Main configuration file (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Normative catalog overriding the bundled one.
    #[arg(long, global = true)]
    catalog: Option<PathBuf>,
    /// Directory for jobs, feedback and the trace ledger.
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one adaptation and print the resulting job.
    Adapt {
        #[arg(long)]
        profile: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        backend: Option<BackendChoice>,
        /// Write only the UI schema to this file.
        #[arg(long)]
        schema_out: Option<PathBuf>,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
    /// Parse and check a rule file (the bundled rules when omitted).
    ValidateRules { path: Option<PathBuf> },
    /// Export the compliance report from the ledger.
    Report {
        #[arg(long, default_value = "full")]
        format: ReportFormat,
    },
    /// Run the quality gates on a candidate output.
    GateCheck {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Inspect the prompt template store.
    Templates {
        #[command(subcommand)]
        action: TemplateAction,
    },
}

#[derive(Subcommand)]
enum TemplateAction {
    List,
    Show {
        id: String,
        #[arg(long)]
        version: Option<u32>,
    },
}

fn read(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

/// Writes a line to stdout; a closed pipe is not an error.
fn out(line: &str) -> anyhow::Result<()> {
    match writeln!(std::io::stdout().lock(), "{line}") {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}

fn print_json(value: &impl serde::Serialize) -> anyhow::Result<()> {
    out(&serde_json::to_string_pretty(value)?)
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let mut config = load_config(cli.config.as_deref(), cli.catalog, cli.data_dir)?;
    match cli.command {
        Command::Adapt {
            profile,
            input,
            backend,
            schema_out,
        } => {
            if let Some(kind) = backend {
                config.backend.kind = kind;
            }
            let mut profile: UserProfile =
                serde_json::from_str(&read(&profile)?).context("parsing profile")?;
            profile.apply_implied_flags();
            let input_id = input
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("input")
                .to_string();
            let input = read_input(&read(&input)?, &input_id)?;
            let service = build_service(&config)?;
            let job = service.run_pipeline(profile, input)?;
            if let (Some(path), Some(schema)) = (schema_out, &job.schema) {
                fs::write(&path, schema.to_json() + "\n")
                    .with_context(|| format!("writing {}", path.display()))?;
            }
            print_json(&job)?;
            eprintln!("job {} {:?}", job.job_id, job.status);
            Ok(match job.status {
                JobStatus::Accepted => ExitCode::SUCCESS,
                _ => ExitCode::from(2),
            })
        }
        Command::Serve { port, host } => {
            let token = config.api_token.clone();
            let service = Arc::new(build_service(&config)?);
            let addr: SocketAddr = format!("{host}:{port}")
                .parse()
                .context("bad listen address")?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind(addr).await?;
                tracing::info!("listening on {}", listener.local_addr()?);
                axum::serve(listener, router(AppState { service, token }))
                    .with_graceful_shutdown(async {
                        let _ = tokio::signal::ctrl_c().await;
                    })
                    .await?;
                anyhow::Ok(())
            })?;
            Ok(ExitCode::SUCCESS)
        }
        Command::ValidateRules { path } => {
            let rules = match path.or(config.rules_path) {
                Some(p) => {
                    parse_rule_set(&read(&p)?).with_context(|| format!("in {}", p.display()))?
                }
                None => adapt_forge::rules::RuleSet::bundled(),
            };
            out(&format!("ok: {} rules", rules.len()))?;
            for r in rules.rules() {
                out(&format!("  {} -> {}", r.rule_id, r.transformation.as_str()))?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Report { format } => {
            if config.data_dir.is_none() {
                bail!("report needs a data directory (--data-dir or dataDir in the config)");
            }
            let service = build_service(&config)?;
            out(&service.compliance_report(format).to_json())?;
            Ok(ExitCode::SUCCESS)
        }
        Command::GateCheck { input, output } => {
            let service = build_service(&config)?;
            let input_id = input
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("input")
                .to_string();
            let input = read_input(&read(&input)?, &input_id)?;
            let candidate = read_candidate(&read(&output)?, &service.components().pictos)?;
            let report = gate_check(&input, &candidate, &config);
            print_json(&report)?;
            Ok(if report.overall_passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            })
        }
        Command::Templates { action } => {
            let service = build_service(&config)?;
            let store = &service.components().templates;
            match action {
                TemplateAction::List => {
                    for h in store.list() {
                        out(&h.to_string())?;
                    }
                }
                TemplateAction::Show { id, version } => {
                    let t = store
                        .get(&id, version)
                        .with_context(|| format!("no template {id}"))?;
                    print_json(&t)?;
                }
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
