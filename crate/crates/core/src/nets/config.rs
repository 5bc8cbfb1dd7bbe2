use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use super::layers::LayerSpec;
use crate::error::{Error, Result};
use crate::filter::{FilterSpec, DEFAULT_KERNEL, DEFAULT_WINDOW};
use crate::sampling::BorderMode;

/// Feature widths of the seven DKN layers.
pub const DKN_CHANNELS: [usize; 7] = [32, 32, 64, 64, 128, 128, 128];
/// Feature widths of the six FDKN layers.
pub const FDKN_CHANNELS: [usize; 6] = [32, 32, 64, 64, 128, 128];
/// Space-to-channel stride of the FDKN input resampling.
pub const FDKN_STRIDE: usize = 4;

/// How the sigmoid-combined head output becomes a kernel.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Constraint {
    /// Zero-sum weights for the residual filter.
    MeanSubtract,
    /// Unit-sum weights for the plain filter.
    L1Normalize,
}

/// Which input streams feed the regression heads.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Streams {
    Both,
    GuidanceOnly,
    TargetOnly,
}

macro_rules! str_enum {
    ($t:ty { $($v:ident => $s:literal),* $(,)? }) => {
        impl $t {
            pub fn as_str(self) -> &'static str {
                match self { $(<$t>::$v => $s),* }
            }
        }
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
        impl FromStr for $t {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($s => Ok(<$t>::$v),)*
                    _ => Err(Error::Invalid(format!("unknown {} {s:?}", stringify!($t)))),
                }
            }
        }
    };
}

str_enum!(Constraint { MeanSubtract => "mean_subtract", L1Normalize => "l1_normalize" });
str_enum!(Streams { Both => "both", GuidanceOnly => "guidance", TargetOnly => "target" });

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DknConfig {
    pub k: usize,
    /// Side of the window the sampling positions are clamped to.
    pub window: usize,
    pub residual: bool,
    pub channels: Vec<usize>,
    pub constraint: Constraint,
    pub streams: Streams,
    /// With `false` the offset heads are dropped and the sampling grid stays regular.
    pub learn_offsets: bool,
    pub border: BorderMode,
    /// Channels of the guidance image (single-channel guidance is replicated).
    pub guidance_channels: usize,
}

impl Default for DknConfig {
    fn default() -> Self {
        DknConfig {
            k: DEFAULT_KERNEL,
            window: DEFAULT_WINDOW,
            residual: true,
            channels: DKN_CHANNELS.to_vec(),
            constraint: Constraint::MeanSubtract,
            streams: Streams::Both,
            learn_offsets: true,
            border: BorderMode::Border,
            guidance_channels: 3,
        }
    }
}

impl DknConfig {
    /// Non-residual variant: L1-normalized weights and the plain weighted average.
    pub fn plain() -> Self {
        DknConfig {
            residual: false,
            constraint: Constraint::L1Normalize,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.filter_spec().validate()?;
        let want = if self.residual {
            Constraint::MeanSubtract
        } else {
            Constraint::L1Normalize
        };
        if self.constraint != want {
            return Err(Error::Invalid(format!(
                "constraint {} does not match residual = {}",
                self.constraint, self.residual
            )));
        }
        if self.guidance_channels == 0 || self.channels.contains(&0) {
            return Err(Error::Invalid("channel counts must be positive".into()));
        }
        Ok(())
    }

    pub fn filter_spec(&self) -> FilterSpec {
        FilterSpec {
            k: self.k,
            window: self.window,
            border: self.border,
            residual: self.residual,
        }
    }

    /// Feature tower layers in the DKN layout: 7x7, down, 5x5, down, 5x5, 3x3, 3x3.
    pub fn dkn_layers(&self) -> Result<Vec<LayerSpec>> {
        let c = &self.channels;
        if c.len() != 7 {
            return Err(Error::Invalid(format!("DKN needs 7 feature widths, got {}", c.len())));
        }
        Ok(vec![
            LayerSpec::conv(c[0], 7, true),
            LayerSpec::down(c[1]),
            LayerSpec::conv(c[2], 5, true),
            LayerSpec::down(c[3]),
            LayerSpec::conv(c[4], 5, true),
            LayerSpec::conv(c[5], 3, false),
            LayerSpec::conv(c[6], 3, false),
        ])
    }

    /// Feature tower layers in the FDKN layout: six 3x3 convolutions, BN on 1, 3, 5.
    pub fn fdkn_layers(&self) -> Result<Vec<LayerSpec>> {
        let c = &self.channels;
        if c.len() != 6 {
            return Err(Error::Invalid(format!("FDKN needs 6 feature widths, got {}", c.len())));
        }
        Ok(c.iter()
            .enumerate()
            .map(|(i, &w)| LayerSpec::conv(w, 3, i % 2 == 0))
            .collect())
    }

    fn push_kv(&self, kv: &mut BTreeMap<String, String>) {
        let mut put = |k: &str, v: String| {
            kv.insert(k.to_string(), v);
        };
        put("k", self.k.to_string());
        put("window", self.window.to_string());
        put("residual", self.residual.to_string());
        put(
            "channels",
            self.channels.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(","),
        );
        put("constraint", self.constraint.to_string());
        put("streams", self.streams.to_string());
        put("learn_offsets", self.learn_offsets.to_string());
        put("border", self.border.as_str().to_string());
        put("guidance_channels", self.guidance_channels.to_string());
        put("init", "kaiming_uniform_fan_in".to_string());
    }

    fn from_kv(kv: &BTreeMap<String, String>, default: DknConfig) -> Result<Self> {
        let mut c = default;
        if let Some(v) = kv.get("k") {
            c.k = parse(v, "k")?;
        }
        if let Some(v) = kv.get("window") {
            c.window = parse(v, "window")?;
        }
        if let Some(v) = kv.get("residual") {
            c.residual = parse(v, "residual")?;
        }
        if let Some(v) = kv.get("channels") {
            c.channels = v
                .split(',')
                .map(|s| parse(s.trim(), "channels"))
                .collect::<Result<_>>()?;
        }
        c.constraint = match kv.get("constraint") {
            Some(v) => v.parse()?,
            None if c.residual => Constraint::MeanSubtract,
            None => Constraint::L1Normalize,
        };
        if let Some(v) = kv.get("streams") {
            c.streams = v.parse()?;
        }
        if let Some(v) = kv.get("learn_offsets") {
            c.learn_offsets = parse(v, "learn_offsets")?;
        }
        if let Some(v) = kv.get("border") {
            c.border = v.parse()?;
        }
        if let Some(v) = kv.get("guidance_channels") {
            c.guidance_channels = parse(v, "guidance_channels")?;
        }
        c.validate()?;
        Ok(c)
    }
}

fn parse<V: FromStr>(s: &str, key: &str) -> Result<V> {
    s.parse()
        .map_err(|_| Error::Invalid(format!("cannot parse {key} = {s:?}")))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FdknConfig {
    pub base: DknConfig,
    /// Input resampling stride.
    pub stride: usize,
}

impl Default for FdknConfig {
    fn default() -> Self {
        FdknConfig {
            base: DknConfig {
                channels: FDKN_CHANNELS.to_vec(),
                ..DknConfig::default()
            },
            stride: FDKN_STRIDE,
        }
    }
}

impl FdknConfig {
    pub fn plain() -> Self {
        let mut c = Self::default();
        c.base.residual = false;
        c.base.constraint = Constraint::L1Normalize;
        c
    }

    /// Output channels of each weight head: one k x k kernel per sub-pixel phase.
    pub fn weight_head_channels(&self) -> usize {
        self.stride * self.stride * self.base.k * self.base.k
    }

    pub fn offset_head_channels(&self) -> usize {
        2 * self.weight_head_channels()
    }

    pub fn validate(&self) -> Result<()> {
        if self.stride == 0 {
            return Err(Error::Invalid("resampling stride must be positive".into()));
        }
        self.base.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Arch {
    Dkn,
    Fdkn,
}

str_enum!(Arch { Dkn => "dkn", Fdkn => "fdkn" });

/// Architecture description stored in checkpoints.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ModelConfig {
    Dkn(DknConfig),
    Fdkn(FdknConfig),
}

impl ModelConfig {
    pub fn arch(&self) -> Arch {
        match self {
            ModelConfig::Dkn(_) => Arch::Dkn,
            ModelConfig::Fdkn(_) => Arch::Fdkn,
        }
    }

    pub fn base(&self) -> &DknConfig {
        match self {
            ModelConfig::Dkn(c) => c,
            ModelConfig::Fdkn(c) => &c.base,
        }
    }

    pub fn base_mut(&mut self) -> &mut DknConfig {
        match self {
            ModelConfig::Dkn(c) => c,
            ModelConfig::Fdkn(c) => &mut c.base,
        }
    }

    pub fn default_for(arch: Arch) -> Self {
        match arch {
            Arch::Dkn => ModelConfig::Dkn(DknConfig::default()),
            Arch::Fdkn => ModelConfig::Fdkn(FdknConfig::default()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ModelConfig::Dkn(c) => c.validate(),
            ModelConfig::Fdkn(c) => c.validate(),
        }
    }

    pub fn to_kv(&self) -> BTreeMap<String, String> {
        let mut kv = BTreeMap::new();
        kv.insert("arch".into(), self.arch().to_string());
        self.base().push_kv(&mut kv);
        if let ModelConfig::Fdkn(c) = self {
            kv.insert("stride".into(), c.stride.to_string());
        }
        kv
    }

    pub fn from_kv(kv: &BTreeMap<String, String>) -> Result<Self> {
        let arch: Arch = kv
            .get("arch")
            .ok_or_else(|| Error::Invalid("model config lacks arch".into()))?
            .parse()?;
        match arch {
            Arch::Dkn => Ok(ModelConfig::Dkn(DknConfig::from_kv(kv, DknConfig::default())?)),
            Arch::Fdkn => {
                let d = FdknConfig::default();
                let base = DknConfig::from_kv(kv, d.base)?;
                let stride = match kv.get("stride") {
                    Some(v) => parse(v, "stride")?,
                    None => d.stride,
                };
                let c = FdknConfig { base, stride };
                c.validate()?;
                Ok(ModelConfig::Fdkn(c))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        DknConfig::default().validate().unwrap();
        DknConfig::plain().validate().unwrap();
        FdknConfig::default().validate().unwrap();
    }

    #[test]
    fn constraint_must_follow_residual() {
        let c = DknConfig {
            residual: false,
            ..DknConfig::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn even_or_small_window_rejected() {
        for (k, window) in [(2, 15), (3, 14), (5, 3)] {
            let c = DknConfig {
                k,
                window,
                ..DknConfig::default()
            };
            assert!(c.validate().is_err(), "k {k} window {window}");
        }
    }

    #[test]
    fn fdkn_head_widths() {
        let c = FdknConfig::default();
        assert_eq!(c.weight_head_channels(), 144);
        assert_eq!(c.offset_head_channels(), 288);
    }

    #[test]
    fn kv_round_trip() {
        let mut f = FdknConfig::plain();
        f.base.k = 5;
        f.base.streams = Streams::TargetOnly;
        f.base.learn_offsets = false;
        for cfg in [ModelConfig::Dkn(DknConfig::default()), ModelConfig::Fdkn(f)] {
            assert_eq!(ModelConfig::from_kv(&cfg.to_kv()).unwrap(), cfg);
        }
    }
}
