//! CNN workload description and resource budget, plus their on-disk JSON form.
//!
//! A network file looks like
//!
//! ```json
//! {
//!   "batch_size": 1,
//!   "layers": [
//!     { "name": "conv2_1", "c_in": 64, "c_out": 128, "h_out": 112, "w_out": 112, "k_x": 3, "k_y": 3 }
//!   ]
//! }
//! ```
//!
//! and a budget file is `{ "dsp": 512, "lutram": 100000 }`.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape of one convolutional layer. Output dimensions are given directly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub name: String,
    pub c_in: u32,
    pub c_out: u32,
    pub h_out: u32,
    pub w_out: u32,
    pub k_x: u32,
    pub k_y: u32,
}

impl LayerSpec {
    pub fn new(
        name: impl Into<String>,
        c_in: u32,
        c_out: u32,
        h_out: u32,
        w_out: u32,
        k_x: u32,
        k_y: u32,
    ) -> Self {
        LayerSpec {
            name: name.into(),
            c_in,
            c_out,
            h_out,
            w_out,
            k_x,
            k_y,
        }
    }

    /// Number of elements in one kernel window, `K_x·K_y`.
    pub fn kernel_size(&self) -> u32 {
        self.k_x * self.k_y
    }

    /// Dense MAC count for one image: `H_O·W_O·C_I·C_O·K_x·K_y`.
    pub fn workload(&self) -> u64 {
        [
            self.h_out, self.w_out, self.c_in, self.c_out, self.k_x, self.k_y,
        ]
        .iter()
        .map(|&d| u64::from(d))
        .product()
    }

    pub fn validate(&self) -> Result<()> {
        let ctx = || format!("layer '{}'", self.name);
        if self.name.trim().is_empty() {
            return Err(Error::invalid("layer", "name", "must not be empty"));
        }
        let dims: [(&'static str, u32); 6] = [
            ("c_in", self.c_in),
            ("c_out", self.c_out),
            ("h_out", self.h_out),
            ("w_out", self.w_out),
            ("k_x", self.k_x),
            ("k_y", self.k_y),
        ];
        for (field, value) in dims {
            if value == 0 {
                return Err(Error::invalid(ctx(), field, "must be at least 1"));
            }
        }
        if self.kernel_size() > u32::from(u16::MAX) {
            return Err(Error::invalid(ctx(), "k_x", "kernel window too large"));
        }
        Ok(())
    }
}

/// Dense MAC count per image for `layer`.
pub fn layer_workload(layer: &LayerSpec) -> u64 {
    layer.workload()
}

/// Ordered list of convolutional layers forming a linear streaming pipeline.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub batch_size: u32,
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid(
                "network",
                "batch_size",
                "must be at least 1",
            ));
        }
        if self.layers.is_empty() {
            return Err(Error::invalid(
                "network",
                "layers",
                "at least one layer is required",
            ));
        }
        let mut seen = HashSet::new();
        for layer in &self.layers {
            layer.validate()?;
            if !seen.insert(layer.name.as_str()) {
                return Err(Error::invalid(
                    format!("layer '{}'", layer.name),
                    "name",
                    "duplicate layer name",
                ));
            }
        }
        Ok(())
    }

    pub fn total_workload(&self) -> u64 {
        self.layers.iter().map(LayerSpec::workload).sum()
    }

    pub fn layer(&self, name: &str) -> Option<&LayerSpec> {
        self.layers.iter().find(|l| l.name == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("network serialises")
    }
}

/// Hard caps on MAC units (DSP) and buffer memory (LUTRAM).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceBudget {
    pub dsp: u64,
    pub lutram: u64,
}

impl ResourceBudget {
    pub fn new(dsp: u64, lutram: u64) -> Self {
        ResourceBudget { dsp, lutram }
    }
}

fn parse_json<T: serde::de::DeserializeOwned>(text: &str, path: &Path) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

/// Parses and validates a network document. `origin` is only used in errors.
pub fn parse_network(text: &str, origin: &Path) -> Result<NetworkSpec> {
    let net: NetworkSpec = parse_json(text, origin)?;
    net.validate()?;
    Ok(net)
}

pub fn load_network(path: impl AsRef<Path>) -> Result<NetworkSpec> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_network(&text, path)
}

pub fn parse_budget(text: &str, origin: &Path) -> Result<ResourceBudget> {
    parse_json(text, origin)
}

pub fn load_budget(path: impl AsRef<Path>) -> Result<ResourceBudget> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_budget(&text, path)
}

/// Built-in layer lists for common benchmarks (3×3 and 1×1 convolutions only,
/// output dimensions for 224×224 ImageNet inputs).
pub mod presets {
    use super::{LayerSpec, NetworkSpec};

    /// The 13 convolutional layers of VGG16.
    pub fn vgg16() -> NetworkSpec {
        let shapes: [(&str, u32, u32, u32); 13] = [
            ("conv1_1", 3, 64, 224),
            ("conv1_2", 64, 64, 224),
            ("conv2_1", 64, 128, 112),
            ("conv2_2", 128, 128, 112),
            ("conv3_1", 128, 256, 56),
            ("conv3_2", 256, 256, 56),
            ("conv3_3", 256, 256, 56),
            ("conv4_1", 256, 512, 28),
            ("conv4_2", 512, 512, 28),
            ("conv4_3", 512, 512, 28),
            ("conv5_1", 512, 512, 14),
            ("conv5_2", 512, 512, 14),
            ("conv5_3", 512, 512, 14),
        ];
        NetworkSpec {
            batch_size: 1,
            layers: shapes
                .iter()
                .map(|&(name, c_in, c_out, hw)| LayerSpec::new(name, c_in, c_out, hw, hw, 3, 3))
                .collect(),
        }
    }

    /// First 3×3 convolution of ResNet-18's first residual stage (the
    /// network's second convolutional layer).
    pub fn resnet18_layer2() -> LayerSpec {
        LayerSpec::new("layer1.0.conv1", 64, 64, 56, 56, 3, 3)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CONV2_1: &str = r#"{
        "batch_size": 1,
        "layers": [
            { "name": "conv2_1", "c_in": 64, "c_out": 128, "h_out": 112, "w_out": 112, "k_x": 3, "k_y": 3 }
        ]
    }"#;

    #[test]
    fn parses_conv2_1() {
        let net = parse_network(CONV2_1, Path::new("net.json")).unwrap();
        assert_eq!(
            net.layers,
            vec![LayerSpec::new("conv2_1", 64, 128, 112, 112, 3, 3)]
        );
        assert_eq!(net.batch_size, 1);
    }

    #[test]
    fn vgg16_has_thirteen_layers() {
        let text = presets::vgg16().to_json();
        let net = parse_network(&text, Path::new("vgg16.json")).unwrap();
        assert_eq!(net.layers.len(), 13);
        assert_eq!(
            net.layers[2],
            LayerSpec::new("conv2_1", 64, 128, 112, 112, 3, 3)
        );
    }

    #[test]
    fn zero_channel_names_layer() {
        let text = CONV2_1.replace("\"c_in\": 64", "\"c_in\": 0");
        let err = parse_network(&text, Path::new("net.json")).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("conv2_1") && msg.contains("c_in"), "{msg}");
    }

    #[test]
    fn parse_error_has_location() {
        let err = parse_network(
            "{\n  \"batch_size\": 1,\n  \"layers\": [ {\"name\": 3} ]\n}",
            Path::new("bad.json"),
        )
        .unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_empty_and_duplicates() {
        let empty = r#"{"batch_size": 1, "layers": []}"#;
        assert!(parse_network(empty, Path::new("x")).is_err());
        let mut net = presets::vgg16();
        net.layers[1].name = "conv1_1".into();
        assert!(net
            .validate()
            .unwrap_err()
            .to_string()
            .contains("duplicate"));
    }

    #[test]
    fn workload_examples() {
        assert_eq!(layer_workload(&LayerSpec::new("a", 8, 8, 4, 4, 3, 3)), 9216);
        assert_eq!(layer_workload(&LayerSpec::new("b", 1, 1, 1, 1, 1, 1)), 1);
        assert_eq!(
            layer_workload(&LayerSpec::new("conv2_1", 64, 128, 112, 112, 3, 3)),
            924_844_032
        );
    }

    #[test]
    fn budget_parses() {
        let b = parse_budget(r#"{"dsp": 512, "lutram": 4096}"#, Path::new("b.json")).unwrap();
        assert_eq!(b, ResourceBudget::new(512, 4096));
    }
}
