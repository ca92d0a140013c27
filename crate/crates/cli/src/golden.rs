use std::path::PathBuf;

use clap::Args;

use kfwpe::parity::{emit_fixtures, ParityFixture};

use crate::error::{CliError, CliResult};

#[derive(Args, Debug)]
pub struct GoldenCmd {
    /// Fixture directory.
    #[arg(long)]
    pub dir: PathBuf,
    /// Verify the fixtures already in `--dir` instead of writing new ones.
    #[arg(long)]
    pub check: bool,
}

pub fn run(cmd: &GoldenCmd, seed: u64) -> CliResult<()> {
    if !cmd.check {
        std::fs::create_dir_all(&cmd.dir).map_err(|e| CliError::from(e).at(&cmd.dir))?;
        for fx in emit_fixtures(seed)? {
            let p = cmd.dir.join(format!("{}.json", fx.kind()));
            fx.save(&p).map_err(|e| CliError::from(e).at(&p))?;
            println!("wrote {}", p.display());
        }
        return Ok(());
    }

    let mut paths: Vec<PathBuf> = std::fs::read_dir(&cmd.dir)
        .map_err(|e| CliError::from(e).at(&cmd.dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::data("no fixtures found").at(&cmd.dir));
    }
    let mut worst: Option<String> = None;
    for p in &paths {
        let fx = ParityFixture::load(p).map_err(|e| CliError::from(e).at(p))?;
        let o = fx.check()?;
        let ok = o.passed();
        println!(
            "[{}] {}: max rel deviation {:.3e} (tolerance {:e})",
            if ok { "PASS" } else { "FAIL" },
            p.display(),
            o.max_rel_deviation,
            o.tolerance
        );
        if !ok && worst.is_none() {
            worst = Some(format!("{} exceeds tolerance", p.display()));
        }
    }
    match worst {
        None => Ok(()),
        Some(msg) => Err(CliError::Numeric {
            frame: 0,
            bin: 0,
            msg,
        }),
    }
}
