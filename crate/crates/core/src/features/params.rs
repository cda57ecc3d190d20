use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

/// Whether a parameter is a per-foot waveform landmark or a bilateral time-distance quantity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParamKind {
    Discrete,
    TimeDistance,
}

macro_rules! params {
    ($( $variant:ident => ($name:literal, $unit:literal, $kind:ident) ),+ $(,)?) => {
        /// The 52 gait parameters in canonical column order.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum Param { $( $variant ),+ }

        impl Param {
            pub const ALL: [Param; PARAM_COUNT] = [ $( Param::$variant ),+ ];

            pub fn name(self) -> &'static str {
                match self { $( Param::$variant => $name ),+ }
            }

            pub fn unit(self) -> &'static str {
                match self { $( Param::$variant => $unit ),+ }
            }

            pub fn kind(self) -> ParamKind {
                match self { $( Param::$variant => ParamKind::$kind ),+ }
            }
        }
    };
}

pub const PARAM_COUNT: usize = 52;

params! {
    St => ("ST", "s", TimeDistance),
    Fv1 => ("F_V1", "BW", Discrete),
    Fv2 => ("F_V2", "BW", Discrete),
    Fv3 => ("F_V3", "BW", Discrete),
    Tv1 => ("T_V1", "%ST", Discrete),
    Tv2 => ("T_V2", "%ST", Discrete),
    Tv3 => ("T_V3", "%ST", Discrete),
    Fap1 => ("F_AP1", "BW", Discrete),
    Fap2 => ("F_AP2", "BW", Discrete),
    Fap3 => ("F_AP3", "BW", Discrete),
    Tap1 => ("T_AP1", "%ST", Discrete),
    Tap2 => ("T_AP2", "%ST", Discrete),
    Tap3 => ("T_AP3", "%ST", Discrete),
    Fml1 => ("F_ML1", "BW", Discrete),
    Fml2 => ("F_ML2", "BW", Discrete),
    Fml3 => ("F_ML3", "BW", Discrete),
    Tml1 => ("T_ML1", "%ST", Discrete),
    Tml2 => ("T_ML2", "%ST", Discrete),
    Tml3 => ("T_ML3", "%ST", Discrete),
    FvAvg => ("F_VAVG", "BW", Discrete),
    FapAvg => ("F_APAVG", "BW", Discrete),
    FmlAvg => ("F_MLAVG", "BW", Discrete),
    IfV => ("IF_V", "%BW*s", Discrete),
    IfAp => ("IF_AP", "%BW*s", Discrete),
    IfMl => ("IF_ML", "%BW*s", Discrete),
    IfV1 => ("IF_V1", "%BW*s", Discrete),
    IfV2 => ("IF_V2", "%BW*s", Discrete),
    IfV3 => ("IF_V3", "%BW*s", Discrete),
    IfApDec => ("IF_APDEC", "%BW*s", Discrete),
    IfApAcc => ("IF_APACC", "%BW*s", Discrete),
    IfLat => ("IF_LAT", "%BW*s", Discrete),
    IfMed => ("IF_MED", "%BW*s", Discrete),
    CopAng => ("COPANG", "deg", Discrete),
    CopDev => ("COPDEV", "FL", Discrete),
    CopAp => ("COP_AP", "FL", Discrete),
    CopMl => ("COP_ML", "FL", Discrete),
    CopV => ("COPV", "FL/s", Discrete),
    DecT => ("DECT", "s", Discrete),
    AccT => ("ACCT", "s", Discrete),
    Lr0080 => ("LR0080", "BW/s", Discrete),
    Lr2080 => ("LR2080", "BW/s", Discrete),
    Ur8000 => ("UR8000", "BW/s", Discrete),
    Ur8020 => ("UR8020", "BW/s", Discrete),
    Ds => ("DS", "s", TimeDistance),
    StepLen => ("STEPLEN", "m", TimeDistance),
    StepWd => ("STEPWD", "m", TimeDistance),
    StrLen => ("STRLEN", "m", TimeDistance),
    StepV => ("STEPV", "km/h", TimeDistance),
    Gv => ("GV", "km/h", TimeDistance),
    StrideT => ("STRIDET", "s", TimeDistance),
    Bf => ("BF", "Hz", TimeDistance),
    Cad => ("CAD", "1/min", TimeDistance),
}

impl Param {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_name(name: &str) -> Option<Param> {
        Param::ALL.iter().copied().find(|p| p.name() == name)
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One value per [`Param`]; `NaN` marks a parameter that could not be computed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector {
    #[serde(with = "values_serde")]
    values: [f64; PARAM_COUNT],
}

mod values_serde {
    use super::PARAM_COUNT;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64; PARAM_COUNT], s: S) -> Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[f64; PARAM_COUNT], D::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        v.try_into()
            .map_err(|_| serde::de::Error::custom("expected 52 parameter values"))
    }
}

impl Default for ParameterVector {
    fn default() -> Self {
        ParameterVector {
            values: [f64::NAN; PARAM_COUNT],
        }
    }
}

impl ParameterVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn is_complete(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn missing(&self) -> Vec<Param> {
        Param::ALL
            .iter()
            .copied()
            .filter(|p| !self.values[p.index()].is_finite())
            .collect()
    }

    /// Copies every finite value of `other` over this vector.
    pub fn merge(&mut self, other: &ParameterVector) {
        for (dst, &src) in self.values.iter_mut().zip(other.values.iter()) {
            if src.is_finite() {
                *dst = src;
            }
        }
    }
}

impl Index<Param> for ParameterVector {
    type Output = f64;

    fn index(&self, p: Param) -> &f64 {
        &self.values[p.index()]
    }
}

impl IndexMut<Param> for ParameterVector {
    fn index_mut(&mut self, p: Param) -> &mut f64 {
        &mut self.values[p.index()]
    }
}
