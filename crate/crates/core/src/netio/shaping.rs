use std::io::Write;
use std::thread;
use std::time::{Duration, Instant};

use super::NetError;
use crate::runtime::NetProfile;

pub const DEFAULT_QUANTUM: usize = 64 * 1024;

/// User-space link shaping: every frame is held for half a round trip and
/// then paced out in quanta at the profile's bandwidth.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShapingConfig {
    pub profile: NetProfile,
    quantum: usize,
}

impl ShapingConfig {
    pub fn new(profile: NetProfile, quantum: usize) -> Result<Self, NetError> {
        if quantum == 0 {
            return Err(NetError::InvalidShaping("pacing quantum must be positive".into()));
        }
        Ok(ShapingConfig { profile, quantum })
    }

    pub fn from_profile(profile: NetProfile) -> Self {
        ShapingConfig {
            profile,
            quantum: DEFAULT_QUANTUM,
        }
    }

    pub fn quantum(&self) -> usize {
        self.quantum
    }
}

fn sleep_until(deadline: Instant) {
    let now = Instant::now();
    if deadline > now {
        thread::sleep(deadline - now);
    }
}

/// Writes `frame` to `conn` under `shaping` and returns the elapsed seconds.
pub fn shaped_send<W: Write>(conn: &mut W, frame: &[u8], shaping: &ShapingConfig) -> Result<f64, NetError> {
    let start = Instant::now();
    let profile = &shaping.profile;
    let latency = Duration::from_secs_f64(profile.rtt_s / 2.0);
    sleep_until(start + latency);
    let lost = |e: std::io::Error| match e.kind() {
        std::io::ErrorKind::BrokenPipe
        | std::io::ErrorKind::ConnectionReset
        | std::io::ErrorKind::ConnectionAborted
        | std::io::ErrorKind::NotConnected => NetError::ConnectionLost,
        _ => NetError::Io(e.to_string()),
    };
    match profile.bandwidth_bits_per_s {
        None => conn.write_all(frame).map_err(lost)?,
        Some(bw) => {
            let mut sent = 0usize;
            for chunk in frame.chunks(shaping.quantum) {
                conn.write_all(chunk).map_err(lost)?;
                sent += chunk.len();
                let serialization = Duration::from_secs_f64(8.0 * sent as f64 / bw);
                sleep_until(start + latency + serialization);
            }
        }
    }
    conn.flush().map_err(lost)?;
    Ok(start.elapsed().as_secs_f64())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runtime::comm_time;

    #[test]
    fn ideal_adds_nothing() {
        let mut sink = Vec::new();
        let s = ShapingConfig::from_profile(NetProfile::ideal());
        let t = shaped_send(&mut sink, &[0u8; 4096], &s).unwrap();
        assert!(t < 0.002, "{t}");
        assert_eq!(sink.len(), 4096);
    }

    #[test]
    fn wan_half_rtt_floor_and_ordering() {
        let frame = [1u8; 64];
        let wan = ShapingConfig::from_profile(NetProfile::wan());
        let lan = ShapingConfig::from_profile(NetProfile::lan());
        let tw = shaped_send(&mut Vec::new(), &frame, &wan).unwrap();
        let tl = shaped_send(&mut Vec::new(), &frame, &lan).unwrap();
        assert!(tw >= 0.05, "{tw}");
        assert!(tw >= tl);
    }

    #[test]
    fn bandwidth_lower_bound() {
        // 1 MB over 100 Mbit/s with 10 KB quanta: at least 80 ms of pacing.
        let profile = NetProfile::custom(Some(1e8), 0.0).unwrap();
        let s = ShapingConfig::new(profile, 10_000).unwrap();
        let frame = vec![0u8; 1_000_000];
        let mut sink = Vec::new();
        let t = shaped_send(&mut sink, &frame, &s).unwrap();
        assert!(t >= comm_time(frame.len() as u64, &profile), "{t}");
        assert_eq!(sink.len(), frame.len());
    }

    #[test]
    fn zero_quantum_rejected() {
        assert!(ShapingConfig::new(NetProfile::lan(), 0).is_err());
    }
}
