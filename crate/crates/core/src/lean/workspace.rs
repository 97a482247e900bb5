//! Content-addressed checkouts of `(remote, commit)` pairs and project builds.
//!
//! Layout under the cache root:
//!
//! ```text
//! <cache>/<sha256(remote)>/<commit>/        checkout
//! <cache>/<sha256(remote)>/<commit>.ready   population finished
//! <cache>/<sha256(remote)>/<commit>.built   last build succeeded
//! <cache>/<sha256(remote)>/<commit>.lock    held while populating
//! <cache>/<sha256(remote)>/_heads/          branch discovery clone
//! ```

use std::fs::{self, File};
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::git;
use crate::model::{sha256_hex, RepoCoordinates};

pub const CACHE_DIR_ENV: &str = "SORRYFORGE_CACHE_DIR";
pub const DEFAULT_BUILD_TIMEOUT: Duration = Duration::from_secs(3600);
const TOOLCHAIN_FILE: &str = "lean-toolchain";

#[derive(Debug, thiserror::Error)]
pub enum WorkspaceError {
    #[error("clone of {remote} failed: {message}")]
    CloneFailed { remote: String, message: String },
    #[error("checkout of {commit} failed: {message}")]
    CheckoutFailed { commit: String, message: String },
    #[error("no {TOOLCHAIN_FILE} file in {0}")]
    ToolchainMissing(PathBuf),
    #[error("build exceeded {0:?}")]
    BuildTimeout(Duration),
    #[error("cache i/o at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> WorkspaceError + '_ {
    move |source| WorkspaceError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum BuildState {
    Unbuilt,
    Built,
    Failed(Vec<String>),
}

/// A checked-out project ready to be built and elaborated.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Workspace {
    pub root: PathBuf,
    pub coords: RepoCoordinates,
    pub toolchain: String,
    pub build_state: BuildState,
    built_marker: Option<PathBuf>,
}

impl Workspace {
    /// Wraps an existing directory without going through the cache.
    pub fn at(root: impl Into<PathBuf>, coords: RepoCoordinates) -> Result<Self, WorkspaceError> {
        let root = root.into();
        let toolchain = read_toolchain(&root)?;
        Ok(Workspace {
            root,
            coords: RepoCoordinates {
                lean_version: toolchain.clone(),
                ..coords
            },
            toolchain,
            build_state: BuildState::Unbuilt,
            built_marker: None,
        })
    }

    pub fn is_built(&self) -> bool {
        self.build_state == BuildState::Built
    }

    pub fn read_file(&self, rel: &str) -> std::io::Result<String> {
        fs::read_to_string(self.root.join(rel))
    }
}

/// Extracts the version tag from a toolchain file
/// (`leanprover/lean4:v4.24.0` becomes `v4.24.0`).
pub fn parse_toolchain(contents: &str) -> Option<String> {
    let line = contents.lines().map(str::trim).find(|l| !l.is_empty())?;
    let version = line.rsplit(':').next().unwrap_or(line).trim();
    (!version.is_empty()).then(|| version.to_string())
}

pub fn read_toolchain(root: &Path) -> Result<String, WorkspaceError> {
    fs::read_to_string(root.join(TOOLCHAIN_FILE))
        .ok()
        .and_then(|c| parse_toolchain(&c))
        .ok_or_else(|| WorkspaceError::ToolchainMissing(root.to_path_buf()))
}

#[derive(Debug, Clone)]
pub struct WorkspaceCache {
    dir: PathBuf,
}

impl WorkspaceCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        WorkspaceCache { dir: dir.into() }
    }

    /// Uses `SORRYFORGE_CACHE_DIR` when set, otherwise `default`.
    pub fn from_env_or(default: impl Into<PathBuf>) -> Self {
        match std::env::var_os(CACHE_DIR_ENV) {
            Some(dir) if !dir.is_empty() => Self::new(dir),
            _ => Self::new(default),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn repo_dir(&self, remote: &str) -> PathBuf {
        self.dir.join(sha256_hex(remote.as_bytes()))
    }

    pub fn checkout_dir(&self, remote: &str, commit: &str) -> PathBuf {
        self.repo_dir(remote).join(commit)
    }

    /// Returns the checkout for `(remote, commit)`, cloning only on a miss.
    pub fn prepare(&self, remote: &str, branch: &str, commit: &str) -> Result<Workspace, WorkspaceError> {
        if !git::is_safe_ref(commit) {
            return Err(WorkspaceError::CheckoutFailed {
                commit: commit.into(),
                message: "not a valid commit id".into(),
            });
        }
        let repo_dir = self.repo_dir(remote);
        fs::create_dir_all(&repo_dir).map_err(io_err(&repo_dir))?;
        let root = repo_dir.join(commit);
        let ready = repo_dir.join(format!("{commit}.ready"));

        if !ready.exists() {
            let lock_path = repo_dir.join(format!("{commit}.lock"));
            let lock = File::create(&lock_path).map_err(io_err(&lock_path))?;
            lock.lock().map_err(io_err(&lock_path))?;
            // Another worker may have populated the entry while we waited.
            if !ready.exists() {
                populate(remote, commit, &repo_dir, &root)?;
                File::create(&ready).map_err(io_err(&ready))?;
            }
            drop(lock);
        }

        let built_marker = repo_dir.join(format!("{commit}.built"));
        let toolchain = read_toolchain(&root)?;
        Ok(Workspace {
            coords: RepoCoordinates {
                remote: remote.into(),
                branch: branch.into(),
                commit: commit.into(),
                lean_version: toolchain.clone(),
            },
            toolchain,
            build_state: if built_marker.exists() {
                BuildState::Built
            } else {
                BuildState::Unbuilt
            },
            built_marker: Some(built_marker),
            root,
        })
    }

    /// Fresh clone used only to enumerate remote branch heads.
    pub fn discovery_clone(&self, remote: &str) -> Result<PathBuf, WorkspaceError> {
        let repo_dir = self.repo_dir(remote);
        fs::create_dir_all(&repo_dir).map_err(io_err(&repo_dir))?;
        let heads = repo_dir.join("_heads");
        if heads.exists() {
            fs::remove_dir_all(&heads).map_err(io_err(&heads))?;
        }
        clone(remote, &heads)?;
        Ok(heads)
    }
}

fn clone(remote: &str, dest: &Path) -> Result<(), WorkspaceError> {
    let dest_str = dest.to_string_lossy();
    git::run(None, &["clone", "--quiet", "--no-checkout", "--", remote, &dest_str])
        .map(|_| ())
        .map_err(|e| WorkspaceError::CloneFailed {
            remote: remote.into(),
            message: e.message,
        })
}

fn populate(remote: &str, commit: &str, repo_dir: &Path, root: &Path) -> Result<(), WorkspaceError> {
    let tmp = repo_dir.join(format!(".tmp-{commit}-{}", std::process::id()));
    if tmp.exists() {
        fs::remove_dir_all(&tmp).map_err(io_err(&tmp))?;
    }
    let result = clone(remote, &tmp).and_then(|_| {
        git::run(Some(&tmp), &["checkout", "--quiet", "--detach", commit]).map_err(|e| {
            WorkspaceError::CheckoutFailed {
                commit: commit.into(),
                message: e.message,
            }
        })
    });
    if let Err(e) = result {
        let _ = fs::remove_dir_all(&tmp);
        return Err(e);
    }
    if root.exists() {
        fs::remove_dir_all(root).map_err(io_err(root))?;
    }
    fs::rename(&tmp, root).map_err(io_err(root))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BuildMode {
    /// Runs `program args...` in the workspace root.
    Command {
        program: String,
        args: Vec<String>,
        timeout: Duration,
    },
    /// Reports a fixed outcome without launching anything.
    Scripted(Result<(), Vec<String>>),
}

/// Runs the project build and counts subprocess launches.
#[derive(Debug)]
pub struct Builder {
    mode: BuildMode,
    launches: AtomicUsize,
}

impl Builder {
    pub fn new(mode: BuildMode) -> Self {
        Builder {
            mode,
            launches: AtomicUsize::new(0),
        }
    }

    /// `lake build` with the default timeout.
    pub fn lake() -> Self {
        Self::command("lake", ["build"], DEFAULT_BUILD_TIMEOUT)
    }

    pub fn command<I, S>(program: &str, args: I, timeout: Duration) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::new(BuildMode::Command {
            program: program.into(),
            args: args.into_iter().map(Into::into).collect(),
            timeout,
        })
    }

    pub fn scripted_success() -> Self {
        Self::new(BuildMode::Scripted(Ok(())))
    }

    pub fn scripted_failure(messages: Vec<String>) -> Self {
        Self::new(BuildMode::Scripted(Err(messages)))
    }

    pub fn launches(&self) -> usize {
        self.launches.load(Ordering::SeqCst)
    }

    /// Builds unless already built. Failures land in `build_state`.
    pub fn build(&self, mut ws: Workspace) -> Result<Workspace, WorkspaceError> {
        if ws.is_built() {
            return Ok(ws);
        }
        match &self.mode {
            BuildMode::Scripted(Ok(())) => ws.build_state = BuildState::Built,
            BuildMode::Scripted(Err(messages)) => ws.build_state = BuildState::Failed(messages.clone()),
            BuildMode::Command { program, args, timeout } => {
                self.launches.fetch_add(1, Ordering::SeqCst);
                let (success, output) = run_with_timeout(program, args, &ws.root, *timeout)?;
                if success {
                    ws.build_state = BuildState::Built;
                    if let Some(marker) = &ws.built_marker {
                        File::create(marker).map_err(io_err(marker))?;
                    }
                } else {
                    ws.build_state = BuildState::Failed(output);
                }
            }
        }
        Ok(ws)
    }
}

pub fn build_workspace(ws: Workspace, builder: &Builder) -> Result<Workspace, WorkspaceError> {
    builder.build(ws)
}

/// Returns `(exit success, captured output lines)`.
fn run_with_timeout(
    program: &str,
    args: &[String],
    cwd: &Path,
    timeout: Duration,
) -> Result<(bool, Vec<String>), WorkspaceError> {
    let mut child = Command::new(program)
        .args(args)
        .current_dir(cwd)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(io_err(cwd))?;

    let drain = |stream: Option<Box<dyn Read + Send>>| {
        thread::spawn(move || {
            let mut buf = String::new();
            if let Some(mut s) = stream {
                let _ = s.read_to_string(&mut buf);
            }
            buf
        })
    };
    let out = drain(child.stdout.take().map(|s| Box::new(s) as Box<dyn Read + Send>));
    let err = drain(child.stderr.take().map(|s| Box::new(s) as Box<dyn Read + Send>));

    let started = Instant::now();
    let status = loop {
        match child.try_wait().map_err(io_err(cwd))? {
            Some(status) => break status,
            None if started.elapsed() >= timeout => {
                let _ = child.kill();
                let _ = child.wait();
                return Err(WorkspaceError::BuildTimeout(timeout));
            }
            None => thread::sleep(Duration::from_millis(20)),
        }
    };

    let mut lines: Vec<String> = err
        .join()
        .unwrap_or_default()
        .lines()
        .chain(out.join().unwrap_or_default().lines())
        .filter(|l| !l.trim().is_empty())
        .map(str::to_string)
        .collect::<Vec<_>>();
    if !status.success() && lines.is_empty() {
        lines.push(format!("build exited with {status}"));
    }
    Ok((status.success(), lines))
}
