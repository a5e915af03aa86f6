//! Command-line tool and HTTP service around `creditlens-core`.

use std::fmt;

pub mod args;
pub mod commands;
pub mod prep;
pub mod run;
pub mod service;

use args::{Cli, Command};

/// A numerical check that failed after the computation itself succeeded.
#[derive(Debug)]
pub struct NumericFailure(pub String);

impl fmt::Display for NumericFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for NumericFailure {}

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

/// 3 for numerical failures anywhere in the chain, 2 for everything else.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    let numeric = err.chain().any(|c| {
        c.downcast_ref::<creditlens_core::Error>()
            .is_some_and(|e| e.is_numeric())
            || c.is::<NumericFailure>()
    });
    if numeric {
        EXIT_NUMERIC
    } else {
        EXIT_CONFIG
    }
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Train(a) => report(commands::train(&a)?),
        Command::Evaluate(a) => report(commands::evaluate_models(&a)?),
        Command::Explain(a) => report(commands::explain(&a)?),
        Command::Compare(a) => report(commands::compare(&a)?),
        Command::Synth(a) => report(commands::synth(&a)?),
        Command::Serve(a) => {
            let state = service::ServiceState::load_dir(&a.model_dir)?;
            tokio::runtime::Runtime::new()?.block_on(service::serve(state, &a.host, a.port))
        }
    }
}

fn report(dir: std::path::PathBuf) -> anyhow::Result<()> {
    println!("{}", dir.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numeric_errors_exit_3() {
        let e = anyhow::Error::from(creditlens_core::Error::NotConverged(50)).context("training");
        assert_eq!(exit_code(&e), EXIT_NUMERIC);
        let e: anyhow::Error = NumericFailure("residual".into()).into();
        assert_eq!(exit_code(&e), EXIT_NUMERIC);
        let e = anyhow::Error::from(creditlens_core::Error::UnknownColumn("x".into()));
        assert_eq!(exit_code(&e), EXIT_CONFIG);
        assert_eq!(exit_code(&anyhow::anyhow!("bad flag")), EXIT_CONFIG);
    }
}
