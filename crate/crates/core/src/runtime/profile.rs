use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileLabel {
    Ideal,
    Lan,
    Wan,
    Custom,
}

/// Link model used to turn byte counts into transfer time.
#[derive(Clone, Copy, PartialEq, Debug, Serialize, Deserialize)]
pub struct NetProfile {
    pub label: ProfileLabel,
    /// `None` means unlimited.
    pub bandwidth_bits_per_s: Option<f64>,
    pub rtt_s: f64,
}

impl NetProfile {
    /// Transfers are free.
    pub fn ideal() -> Self {
        NetProfile {
            label: ProfileLabel::Ideal,
            bandwidth_bits_per_s: None,
            rtt_s: 0.0,
        }
    }

    /// 1 Gbit/s, 0.02 ms round trip.
    pub fn lan() -> Self {
        NetProfile {
            label: ProfileLabel::Lan,
            bandwidth_bits_per_s: Some(1e9),
            rtt_s: 0.000_02,
        }
    }

    /// 100 Mbit/s, 100 ms round trip.
    pub fn wan() -> Self {
        NetProfile {
            label: ProfileLabel::Wan,
            bandwidth_bits_per_s: Some(1e8),
            rtt_s: 0.1,
        }
    }

    pub fn custom(bandwidth_bits_per_s: Option<f64>, rtt_s: f64) -> Result<Self, String> {
        if let Some(bw) = bandwidth_bits_per_s {
            if !(bw > 0.0 && bw.is_finite()) {
                return Err(format!("bandwidth must be positive, got {bw}"));
            }
        }
        if !(rtt_s >= 0.0 && rtt_s.is_finite()) {
            return Err(format!("rtt must be nonnegative, got {rtt_s}"));
        }
        Ok(NetProfile {
            label: ProfileLabel::Custom,
            bandwidth_bits_per_s,
            rtt_s,
        })
    }

    pub fn is_ideal(&self) -> bool {
        self.bandwidth_bits_per_s.is_none() && self.rtt_s == 0.0
    }
}

impl fmt::Display for NetProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.label {
            ProfileLabel::Ideal => f.write_str("ideal"),
            ProfileLabel::Lan => f.write_str("lan"),
            ProfileLabel::Wan => f.write_str("wan"),
            ProfileLabel::Custom => match self.bandwidth_bits_per_s {
                Some(bw) => write!(f, "custom:{bw}:{}", self.rtt_s),
                None => write!(f, "custom:inf:{}", self.rtt_s),
            },
        }
    }
}

impl FromStr for NetProfile {
    type Err = String;

    /// `ideal`, `lan`, `wan`, or `custom:<bits/s|inf>:<rtt seconds>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ideal" => Ok(NetProfile::ideal()),
            "lan" => Ok(NetProfile::lan()),
            "wan" => Ok(NetProfile::wan()),
            _ => {
                let rest = s
                    .strip_prefix("custom:")
                    .ok_or_else(|| format!("unknown network profile {s:?}"))?;
                let (bw, rtt) = rest
                    .split_once(':')
                    .ok_or_else(|| format!("expected custom:<bw>:<rtt>, got {s:?}"))?;
                let bw = match bw {
                    "inf" | "unlimited" => None,
                    v => Some(v.parse::<f64>().map_err(|e| format!("bandwidth {v:?}: {e}"))?),
                };
                let rtt = rtt.parse::<f64>().map_err(|e| format!("rtt {rtt:?}: {e}"))?;
                NetProfile::custom(bw, rtt)
            }
        }
    }
}

/// Analytic transfer time of one message: half a round trip plus
/// serialization delay.
pub fn comm_time(payload_bytes: u64, profile: &NetProfile) -> f64 {
    let serialization = match profile.bandwidth_bits_per_s {
        Some(bw) => 8.0 * payload_bytes as f64 / bw,
        None => 0.0,
    };
    profile.rtt_s / 2.0 + serialization
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ideal_is_free() {
        for bytes in [0u64, 1, 1 << 30] {
            assert_eq!(comm_time(bytes, &NetProfile::ideal()), 0.0);
        }
    }

    #[test]
    fn wan_half_rtt() {
        assert!((comm_time(0, &NetProfile::wan()) - 0.05).abs() < 1e-12);
    }

    #[test]
    fn lan_gigabit() {
        // 10^9 bits
        let t = comm_time(125_000_000, &NetProfile::lan());
        assert!((t - 1.00001).abs() < 1e-9, "{t}");
    }

    #[test]
    fn parse() {
        assert_eq!("lan".parse::<NetProfile>().unwrap(), NetProfile::lan());
        let c: NetProfile = "custom:5e6:0.01".parse().unwrap();
        assert_eq!(c.bandwidth_bits_per_s, Some(5e6));
        assert_eq!(c.rtt_s, 0.01);
        assert_eq!(c.to_string().parse::<NetProfile>().unwrap(), c);
        assert!("custom:0:1".parse::<NetProfile>().is_err());
        assert!("mars".parse::<NetProfile>().is_err());
    }
}
