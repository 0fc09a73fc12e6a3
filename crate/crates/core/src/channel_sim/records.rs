//! Newline-delimited record files.
//!
//! ```text
//! # free-form header lines
//! A <ap_id> <x> <y> <channel>
//! T <reference_offset>                                  (labeled files only)
//! E <cycle> <t_end>
//! B <ap_id> <ssid> <antenna> <t> <rss_dbm> <re_1> <im_1> … <re_52> <im_52> [<x> <y> <los>]
//! I <t> <accel_z> <heading> [<x> <y>]
//! ```
//!
//! Sub-carriers follow the −26…−1, 1…26 order. Bracketed columns are ground
//! truth, present only in labeled files. Each beacon is two consecutive `B`
//! lines, antenna 0 then antenna 1.

use std::io::{BufRead, Write};

use num_complex::Complex64;

use super::{CsiFrame, ImuSample, Point, SimError, SiteConfig, Walk, NUM_SUBCARRIERS};

#[derive(Clone, Debug, PartialEq)]
pub struct ApRecord {
    pub id: usize,
    pub position: Point,
    pub channel: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BeaconRecord {
    pub ap_id: usize,
    pub ssid: usize,
    pub timestamp: f64,
    pub frames: [CsiFrame; 2],
    /// Device position and line-of-sight flag.
    pub truth: Option<(Point, bool)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Recording {
    pub header: Vec<String>,
    pub aps: Vec<ApRecord>,
    pub reference_offset: Option<f64>,
    pub scan_times: Vec<f64>,
    pub beacons: Vec<BeaconRecord>,
    pub imu: Vec<ImuSample>,
    pub imu_truth: Option<Vec<Point>>,
}

impl Recording {
    pub fn from_walk(site: &SiteConfig, walk: &Walk, labeled: bool, header: Vec<String>) -> Self {
        let aps = site
            .ap_positions
            .iter()
            .zip(&site.channel_assignment)
            .enumerate()
            .map(|(id, (&position, &channel))| ApRecord { id, position, channel })
            .collect();
        let beacons = walk
            .beacons
            .iter()
            .map(|b| BeaconRecord {
                ap_id: b.ap_id,
                ssid: b.ssid,
                timestamp: b.timestamp,
                frames: b.frames.clone(),
                truth: labeled.then_some((b.position, b.los)),
            })
            .collect();
        Self {
            header,
            aps,
            reference_offset: labeled.then_some(walk.truth.reference_offset),
            scan_times: walk.scan_times.clone(),
            beacons,
            imu: walk.imu.clone(),
            imu_truth: labeled.then(|| walk.truth.positions.clone()),
        }
    }

    pub fn is_labeled(&self) -> bool {
        self.imu_truth.is_some()
    }

    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for h in &self.header {
            writeln!(w, "# {h}")?;
        }
        for a in &self.aps {
            writeln!(w, "A {} {} {} {}", a.id, a.position[0], a.position[1], a.channel)?;
        }
        if let Some(r) = self.reference_offset {
            writeln!(w, "T {r}")?;
        }
        for (k, t) in self.scan_times.iter().enumerate() {
            writeln!(w, "E {k} {t}")?;
        }
        for b in &self.beacons {
            for f in &b.frames {
                write!(w, "B {} {} {} {} {}", b.ap_id, b.ssid, f.antenna_id, b.timestamp, f.rss_dbm)?;
                for c in &f.h {
                    write!(w, " {} {}", c.re, c.im)?;
                }
                if let Some((p, los)) = b.truth {
                    write!(w, " {} {} {}", p[0], p[1], u8::from(los))?;
                }
                writeln!(w)?;
            }
        }
        for (i, s) in self.imu.iter().enumerate() {
            write!(w, "I {} {} {}", s.t, s.accel_z, s.heading)?;
            if let Some(p) = self.imu_truth.as_ref().map(|v| v[i]) {
                write!(w, " {} {}", p[0], p[1])?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(r: R) -> Result<Self, SimError> {
        let mut rec = Recording {
            header: Vec::new(),
            aps: Vec::new(),
            reference_offset: None,
            scan_times: Vec::new(),
            beacons: Vec::new(),
            imu: Vec::new(),
            imu_truth: None,
        };
        let mut imu_truth = Vec::new();
        let mut pending: Option<(usize, usize, f64, CsiFrame, Option<(Point, bool)>)> = None;
        for (n, line) in r.lines().enumerate() {
            let line = line?;
            let line_no = n + 1;
            let err = |msg: &str| SimError::Parse { line: line_no, msg: msg.to_string() };
            if let Some(h) = line.strip_prefix('#') {
                rec.header.push(h.strip_prefix(' ').unwrap_or(h).to_string());
                continue;
            }
            let f: Vec<&str> = line.split_ascii_whitespace().collect();
            let Some((&tag, rest)) = f.split_first() else { continue };
            let num = |i: usize| -> Result<f64, SimError> {
                rest.get(i).ok_or_else(|| err("missing field"))?.parse::<f64>().map_err(|e| err(&e.to_string()))
            };
            let int = |i: usize| -> Result<usize, SimError> {
                rest.get(i).ok_or_else(|| err("missing field"))?.parse::<usize>().map_err(|e| err(&e.to_string()))
            };
            if tag != "B" && pending.is_some() {
                return Err(err("beacon is missing its second antenna"));
            }
            match tag {
                "A" if rest.len() == 4 => {
                    let channel = rest[3].parse::<u32>().map_err(|e| err(&e.to_string()))?;
                    rec.aps.push(ApRecord { id: int(0)?, position: [num(1)?, num(2)?], channel });
                }
                "T" if rest.len() == 1 => rec.reference_offset = Some(num(0)?),
                "E" if rest.len() == 2 => {
                    if int(0)? != rec.scan_times.len() {
                        return Err(err("scan cycles out of order"));
                    }
                    rec.scan_times.push(num(1)?);
                }
                "B" => {
                    // RSS-only lines carry no CSI pairs
                    let full = 5 + 2 * NUM_SUBCARRIERS;
                    let (base, carriers) = match rest.len() {
                        l if l == full || l == full + 3 => (full, NUM_SUBCARRIERS),
                        5 | 8 => (5, 0),
                        _ => return Err(err("wrong number of beacon fields")),
                    };
                    let truth = (rest.len() == base + 3).then(|| Ok::<_, SimError>(([num(base)?, num(base + 1)?], int(base + 2)? == 1))).transpose()?;
                    let (ap, ssid, antenna, t) = (int(0)?, int(1)?, int(2)?, num(3)?);
                    let h = (0..carriers)
                        .map(|k| Ok(Complex64::new(num(5 + 2 * k)?, num(6 + 2 * k)?)))
                        .collect::<Result<Vec<_>, SimError>>()?;
                    let frame = CsiFrame { ap_id: ap, antenna_id: antenna as u8, timestamp: t, h, rss_dbm: num(4)? };
                    match (antenna, pending.take()) {
                        (0, None) => pending = Some((ap, ssid, t, frame, truth)),
                        (1, Some((pap, pssid, pt, first, ptruth))) if pap == ap && pssid == ssid && pt == t => {
                            rec.beacons.push(BeaconRecord {
                                ap_id: ap,
                                ssid,
                                timestamp: t,
                                frames: [first, frame],
                                truth: ptruth,
                            });
                        }
                        _ => return Err(err("antenna lines out of order")),
                    }
                }
                "I" if rest.len() == 3 || rest.len() == 5 => {
                    rec.imu.push(ImuSample { t: num(0)?, accel_z: num(1)?, heading: num(2)? });
                    if rest.len() == 5 {
                        imu_truth.push([num(3)?, num(4)?]);
                    }
                }
                _ => return Err(err(&format!("unrecognised record '{tag}'"))),
            }
        }
        if pending.is_some() {
            return Err(SimError::Parse { line: 0, msg: "file ends inside a beacon".into() });
        }
        if !imu_truth.is_empty() {
            if imu_truth.len() != rec.imu.len() {
                return Err(SimError::Parse { line: 0, msg: "truth present on only some IMU lines".into() });
            }
            rec.imu_truth = Some(imu_truth);
        }
        Ok(rec)
    }

    /// False when the beacons carry RSS only.
    pub fn has_csi(&self) -> bool {
        self.beacons.iter().all(|b| b.frames.iter().all(|f| !f.h.is_empty()))
    }

    /// Position of AP `id`, if listed.
    pub fn ap_position(&self, id: usize) -> Option<Point> {
        self.aps.iter().find(|a| a.id == id).map(|a| a.position)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_garbage() {
        let e = Recording::read("A 0 1.0\n".as_bytes()).unwrap_err();
        assert!(matches!(e, SimError::Parse { line: 1, .. }));
        assert!(Recording::read("X 1\n".as_bytes()).is_err());
        assert!(Recording::read("E 1 0.9\n".as_bytes()).is_err());
    }

    #[test]
    fn blank_lines_and_header() {
        let r = Recording::read("# hello\n\nE 0 0.9\n".as_bytes()).unwrap();
        assert_eq!(r.header, vec!["hello".to_string()]);
        assert_eq!(r.scan_times, vec![0.9]);
        assert!(!r.is_labeled());
    }
}
