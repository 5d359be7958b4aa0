//! On-disk layout of one simulated case:
//!
//! ```text
//! case_000/
//!   stack_00.stack  ...   one file per stack
//!   truth.json            simulator ground truth
//!   phantom.vol           the source phantom
//! ```

use std::path::{Path, PathBuf};

use svrec::error::{Error, Result};
use svrec::meta::Task;
use svrec::recon::SliceStack;
use svrec::simulate::GroundTruth;
use svrec::Volume;

pub const TRUTH: &str = "truth.json";
pub const PHANTOM: &str = "phantom.vol";

pub fn case_dir(root: &Path, case: usize) -> PathBuf {
    root.join(format!("case_{case:03}"))
}

pub fn stack_path(dir: &Path, k: usize) -> PathBuf {
    dir.join(format!("stack_{k:02}.stack"))
}

fn read_dir_sorted(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::Format(format!("{}: {e}", dir.display())))?;
    let mut paths: Vec<PathBuf> = entries.filter_map(|e| e.ok().map(|e| e.path())).collect();
    paths.sort();
    Ok(paths)
}

/// Every `*.stack` file of a case directory, in file-name order.
pub fn load_stacks(dir: &Path) -> Result<Vec<SliceStack>> {
    let stacks: Vec<SliceStack> = read_dir_sorted(dir)?
        .into_iter()
        .filter(|p| p.extension().is_some_and(|e| e == "stack"))
        .map(|p| SliceStack::load(&p))
        .collect::<Result<_>>()?;
    if stacks.is_empty() {
        return Err(Error::Format(format!("{}: no .stack files", dir.display())));
    }
    Ok(stacks)
}

/// Case directories below `root`, or `root` itself when it holds stacks.
pub fn load_tasks(root: &Path) -> Result<Vec<Task>> {
    let paths = read_dir_sorted(root)?;
    if paths.iter().any(|p| p.extension().is_some_and(|e| e == "stack")) {
        return Ok(vec![Task::new(load_stacks(root)?)]);
    }
    let tasks: Vec<Task> = paths
        .iter()
        .filter(|p| p.is_dir())
        .map(|p| load_stacks(p).map(Task::new))
        .collect::<Result<_>>()?;
    if tasks.is_empty() {
        return Err(Error::Format(format!("{}: no case directories", root.display())));
    }
    Ok(tasks)
}

pub fn save_case(dir: &Path, stacks: &[SliceStack], truth: &GroundTruth) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (k, s) in stacks.iter().enumerate() {
        s.save(&stack_path(dir, k))?;
    }
    truth.phantom.volume.save(&dir.join(PHANTOM))?;
    svrec::io::write_truth(std::fs::File::create(dir.join(TRUTH))?, truth)
}

/// Ground truth whose phantom volume is the file next to it.
pub fn load_truth(path: &Path) -> Result<GroundTruth> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let phantom = Volume::load(&dir.join(PHANTOM))?;
    let f = std::fs::File::open(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    svrec::io::read_truth(std::io::BufReader::new(f), phantom)
}
