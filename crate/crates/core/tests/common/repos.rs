//! Local git repositories with pinned authors and dates.

use std::path::{Path, PathBuf};
use std::process::Command;

pub struct Commit<'a> {
    pub branch: &'a str,
    /// Branch to fork from when `branch` does not exist yet.
    pub from: &'a str,
    pub date: &'a str,
    pub email: &'a str,
    pub files: &'a [(&'a str, &'a str)],
}

fn git(repo: &Path, args: &[&str], date: Option<&str>, email: Option<&str>) {
    let mut cmd = Command::new("git");
    cmd.current_dir(repo)
        .args(["-c", "init.defaultBranch=main", "-c", "commit.gpgsign=false"])
        .args(args);
    if let Some(d) = date {
        cmd.env("GIT_AUTHOR_DATE", d).env("GIT_COMMITTER_DATE", d);
    }
    let email = email.unwrap_or("fixture@example.org");
    cmd.env("GIT_AUTHOR_NAME", "Fixture")
        .env("GIT_AUTHOR_EMAIL", email)
        .env("GIT_COMMITTER_NAME", "Fixture")
        .env("GIT_COMMITTER_EMAIL", email);
    let out = cmd.output().expect("git runs");
    assert!(out.status.success(), "git {args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

/// Creates `<parent>/<name>` with a `lean-toolchain` and the given commits.
pub fn make_repo(parent: &Path, name: &str, commits: &[Commit<'_>]) -> PathBuf {
    let repo = parent.join(name);
    std::fs::create_dir_all(&repo).unwrap();
    git(&repo, &["init", "--quiet"], None, None);
    std::fs::write(repo.join("lean-toolchain"), "leanprover/lean4:v4.24.0\n").unwrap();
    let mut branches = vec!["main".to_string()];
    let mut current = "main".to_string();
    for c in commits {
        if c.branch != current {
            if branches.iter().any(|b| b == c.branch) {
                git(&repo, &["checkout", "--quiet", c.branch], None, None);
            } else {
                git(&repo, &["checkout", "--quiet", "-b", c.branch, c.from], None, None);
                branches.push(c.branch.into());
            }
            current = c.branch.into();
        }
        for (path, text) in c.files {
            let p = repo.join(path);
            std::fs::create_dir_all(p.parent().unwrap()).unwrap();
            std::fs::write(p, text).unwrap();
        }
        git(&repo, &["add", "-A"], None, None);
        git(&repo, &["commit", "--quiet", "-m", "update"], Some(c.date), Some(c.email));
    }
    git(&repo, &["checkout", "--quiet", "main"], None, None);
    repo
}
