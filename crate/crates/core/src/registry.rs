//! Repository registry ingestion, eligibility filtering and categorization.

use std::collections::{BTreeSet, HashSet};
use std::path::Path;

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::model::{timestamp, RepoCategory};

#[derive(Debug, thiserror::Error)]
pub enum RegistryError {
    #[error("malformed registry document: {0}")]
    MalformedDocument(String),
    #[error("invalid category rules: {0}")]
    InvalidRules(String),
    #[error("invalid activity policy: {0}")]
    InvalidPolicy(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Visibility {
    Public,
    Private,
}

/// One candidate repository from the package registry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepoListing {
    pub name: String,
    pub remote: String,
    #[serde(rename = "license")]
    pub license_id: String,
    #[serde(with = "timestamp")]
    pub last_update: DateTime<Utc>,
    pub visibility: Visibility,
    /// `None` while unassigned.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<RepoCategory>,
}

impl RepoListing {
    pub fn is_public(&self) -> bool {
        self.visibility == Visibility::Public
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestOutcome {
    pub listings: Vec<RepoListing>,
    /// Entries dropped for a missing remote/license, an unparseable field,
    /// or a remote already seen earlier in the document.
    pub dropped: usize,
}

/// Parses a registry document: a JSON list of entries with keys
/// `{name, remote, license, last_update, visibility}` and optional `category`.
pub fn ingest_registry(document: &str) -> Result<IngestOutcome, RegistryError> {
    let value: Value = serde_json::from_str(document)
        .map_err(|e| RegistryError::MalformedDocument(e.to_string()))?;
    let Value::Array(entries) = value else {
        return Err(RegistryError::MalformedDocument(
            "top level must be a list of entries".into(),
        ));
    };

    let mut outcome = IngestOutcome::default();
    let mut seen = HashSet::new();
    for entry in entries {
        match parse_entry(entry) {
            Some(listing) if seen.insert(listing.remote.clone()) => {
                outcome.listings.push(listing)
            }
            _ => outcome.dropped += 1,
        }
    }
    Ok(outcome)
}

fn parse_entry(entry: Value) -> Option<RepoListing> {
    let obj = entry.as_object()?;
    let text = |key: &str| {
        obj.get(key)
            .and_then(Value::as_str)
            .map(str::trim)
            .filter(|s| !s.is_empty())
    };
    let remote = text("remote")?.to_string();
    let license_id = text("license")?.to_string();
    let name = text("name").map(str::to_string).unwrap_or_else(|| {
        remote
            .trim_end_matches(".git")
            .rsplit('/')
            .next()
            .unwrap_or_default()
            .to_string()
    });
    let last_update = timestamp::parse(text("last_update")?).ok()?;
    let visibility = match text("visibility").unwrap_or("public") {
        v if v.eq_ignore_ascii_case("public") => Visibility::Public,
        v if v.eq_ignore_ascii_case("private") => Visibility::Private,
        _ => return None,
    };
    let category = match text("category") {
        Some(c) => Some(c.parse().ok()?),
        None => None,
    };
    Some(RepoListing {
        name,
        remote,
        license_id,
        last_update,
        visibility,
        category,
    })
}

/// How recently a repository must have been updated to stay eligible.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivityPolicy {
    SinceDate(#[serde(with = "timestamp")] DateTime<Utc>),
    WithinWindow { days: u32 },
}

impl Default for ActivityPolicy {
    fn default() -> Self {
        ActivityPolicy::WithinWindow { days: 90 }
    }
}

impl ActivityPolicy {
    pub fn within_window(days: u32) -> Result<Self, RegistryError> {
        if days == 0 {
            return Err(RegistryError::InvalidPolicy("window must be >= 1 day".into()));
        }
        Ok(ActivityPolicy::WithinWindow { days })
    }

    pub fn admits(&self, last_update: DateTime<Utc>, now: DateTime<Utc>) -> bool {
        match *self {
            ActivityPolicy::SinceDate(cutoff) => last_update >= cutoff,
            ActivityPolicy::WithinWindow { days } => {
                last_update >= now - Duration::days(i64::from(days))
            }
        }
    }
}

/// SPDX identifiers accepted as open-source licenses.
#[derive(Debug, Clone)]
pub struct LicenseAllowList(BTreeSet<String>);

impl LicenseAllowList {
    pub fn new<I, S>(ids: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        LicenseAllowList(ids.into_iter().map(|s| s.into().to_ascii_lowercase()).collect())
    }

    pub fn from_json(text: &str) -> Result<Self, RegistryError> {
        let ids: Vec<String> = serde_json::from_str(text)
            .map_err(|e| RegistryError::MalformedDocument(e.to_string()))?;
        Ok(Self::new(ids))
    }

    pub fn contains(&self, id: &str) -> bool {
        self.0.contains(&id.trim().to_ascii_lowercase())
    }
}

impl Default for LicenseAllowList {
    fn default() -> Self {
        Self::from_json(include_str!("../data/spdx_allowlist.json"))
            .expect("bundled allow-list parses")
    }
}

/// Keeps public, recognized-license listings updated within `policy`,
/// preserving input order.
pub fn filter_eligible(
    listings: &[RepoListing],
    policy: &ActivityPolicy,
    licenses: &LicenseAllowList,
    now: DateTime<Utc>,
) -> Vec<RepoListing> {
    listings
        .iter()
        .filter(|l| l.is_public())
        .filter(|l| licenses.contains(&l.license_id))
        .filter(|l| policy.admits(l.last_update, now))
        .cloned()
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryRule {
    pub pattern: String,
    pub category: RepoCategory,
}

impl CategoryRule {
    /// `*`, `.` and the empty pattern match everything.
    pub fn is_catch_all(&self) -> bool {
        matches!(self.pattern.as_str(), "" | "*" | ".")
    }

    fn matches(&self, listing: &RepoListing) -> bool {
        if self.is_catch_all() {
            return true;
        }
        let needle = self.pattern.to_lowercase();
        listing.name.to_lowercase().contains(&needle)
            || listing.remote.to_lowercase().contains(&needle)
    }
}

/// Ordered category rules ending in a catch-all, so assignment is total.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CategoryRules(Vec<CategoryRule>);

impl CategoryRules {
    pub fn new(rules: Vec<CategoryRule>) -> Result<Self, RegistryError> {
        match rules.last() {
            None => Err(RegistryError::InvalidRules("no rules given".into())),
            Some(last) if !last.is_catch_all() => Err(RegistryError::InvalidRules(format!(
                "last rule `{}` is not a catch-all",
                last.pattern
            ))),
            Some(_) => Ok(CategoryRules(rules)),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, RegistryError> {
        let rules: Vec<CategoryRule> =
            serde_json::from_str(text).map_err(|e| RegistryError::InvalidRules(e.to_string()))?;
        Self::new(rules)
    }

    pub fn load(path: &Path) -> Result<Self, RegistryError> {
        let text = std::fs::read_to_string(path).map_err(|source| RegistryError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn rules(&self) -> &[CategoryRule] {
        &self.0
    }

    /// First matching rule wins (case-insensitive substring on name or remote).
    pub fn assign(&self, listing: &RepoListing) -> RepoCategory {
        self.0
            .iter()
            .find(|r| r.matches(listing))
            .or(self.0.last())
            .map(|r| r.category)
            .expect("rules are non-empty")
    }
}

impl Default for CategoryRules {
    fn default() -> Self {
        Self::from_json(include_str!("../data/category_rules.json"))
            .expect("bundled rules parse")
    }
}

pub fn assign_category(listing: &RepoListing, rules: &CategoryRules) -> RepoCategory {
    rules.assign(listing)
}

/// Fills in the category of every listing that does not carry one yet.
pub fn categorize(listings: &mut [RepoListing], rules: &CategoryRules) {
    for l in listings.iter_mut().filter(|l| l.category.is_none()) {
        l.category = Some(rules.assign(l));
    }
}
