//! The on-disk network bundle and the canonical JSON used for every artifact.

use std::fs;
use std::path::{Path, PathBuf};

use honvis_core::analytics::AnalyticsReport;
use honvis_core::honbuild::{FonParts, HonParts, IntegrityError};
use honvis_core::layout::ScatterLayout;
use honvis_core::{BuildParams, FirstOrderNetwork, HigherOrderNetwork, Network, PortTable};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const FORMAT_VERSION: &str = "honvis-bundle/1";

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported bundle version: expected {expected}, found {found}")]
    Version { expected: String, found: String },
    #[error("integrity violation: {0}")]
    Integrity(#[from] IntegrityError),
    #[error("integrity violation: port {0} is not in the port table")]
    MissingPort(String),
    #[error("{0}")]
    Mismatch(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NetworkBundle {
    pub format_version: String,
    pub build_params: BuildParams,
    pub ports: PortTable,
    pub fon: FirstOrderNetwork,
    pub hon: HigherOrderNetwork,
    pub analytics: Option<AnalyticsReport>,
    pub layout: Option<ScatterLayout>,
}

#[derive(Deserialize)]
struct RawBundle {
    format_version: String,
    build_params: BuildParams,
    ports: PortTable,
    fon: FonParts,
    hon: HonParts,
    #[serde(default)]
    analytics: Option<AnalyticsReport>,
    #[serde(default)]
    layout: Option<ScatterLayout>,
}

impl NetworkBundle {
    pub fn new(ports: PortTable, fon: FirstOrderNetwork, hon: HigherOrderNetwork) -> Self {
        NetworkBundle {
            format_version: FORMAT_VERSION.to_string(),
            build_params: *hon.build_params(),
            ports,
            fon,
            hon,
            analytics: None,
            layout: None,
        }
    }

    /// Checks that every port resolves and attached artifacts fit the network.
    pub fn validate(&self) -> Result<(), BundleError> {
        for p in self.fon.ports().iter().chain(self.hon.port_index().keys()) {
            if !self.ports.contains(p.as_str()) {
                return Err(BundleError::MissingPort(p.to_string()));
            }
        }
        if self.hon.build_params() != &self.build_params {
            return Err(BundleError::Mismatch("bundle build_params differ from the HoN's".into()));
        }
        if let Some(a) = &self.analytics {
            check_analytics(a, &self.hon)?;
        }
        if let Some(l) = &self.layout {
            check_layout(l, &self.hon)?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String, BundleError> {
        canonical_json(self)
    }

    pub fn from_json(text: &str) -> Result<Self, BundleError> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let found = value.get("format_version").and_then(|v| v.as_str()).unwrap_or("<missing>");
        if found != FORMAT_VERSION {
            return Err(BundleError::Version { expected: FORMAT_VERSION.into(), found: found.into() });
        }
        let raw: RawBundle = serde_json::from_value(value)?;
        let bundle = NetworkBundle {
            format_version: raw.format_version,
            build_params: raw.build_params,
            ports: raw.ports,
            fon: FirstOrderNetwork::from_parts(raw.fon)?,
            hon: HigherOrderNetwork::from_parts(raw.hon)?,
            analytics: raw.analytics,
            layout: raw.layout,
        };
        bundle.validate()?;
        Ok(bundle)
    }
}

pub fn check_analytics(a: &AnalyticsReport, hon: &HigherOrderNetwork) -> Result<(), BundleError> {
    let n = hon.node_count();
    if a.node_metrics.len() != n || a.hon_pagerank.scores.len() != n || a.communities.assignment.len() != n {
        return Err(BundleError::Mismatch(format!(
            "metrics cover {} nodes but the network has {n}",
            a.node_metrics.len()
        )));
    }
    Ok(())
}

pub fn check_layout(l: &ScatterLayout, hon: &HigherOrderNetwork) -> Result<(), BundleError> {
    if l.positions.len() != hon.node_count() {
        return Err(BundleError::Mismatch(format!(
            "layout covers {} nodes but the network has {}",
            l.positions.len(),
            hon.node_count()
        )));
    }
    Ok(())
}

/// Pretty JSON with object keys sorted and shortest round-trip floats, so
/// equal values always produce identical bytes.
pub fn canonical_json<T: Serialize>(value: &T) -> Result<String, BundleError> {
    let value = serde_json::to_value(value)?;
    let mut s = serde_json::to_string_pretty(&value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), BundleError> {
    let text = canonical_json(value)?;
    fs::write(path, text).map_err(|source| BundleError::Io { path: path.to_path_buf(), source })
}

pub fn read_text(path: &Path) -> Result<String, BundleError> {
    fs::read_to_string(path).map_err(|source| BundleError::Io { path: path.to_path_buf(), source })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, BundleError> {
    Ok(serde_json::from_str(&read_text(path)?)?)
}

pub fn export_bundle(bundle: &NetworkBundle, path: &Path) -> Result<(), BundleError> {
    write_json(bundle, path)
}

pub fn import_bundle(path: &Path) -> Result<NetworkBundle, BundleError> {
    NetworkBundle::from_json(&read_text(path)?)
}
