use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use super::ModbusError;

/// How a point's value is packed into its holding register.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Encoding {
    /// Unsigned integer times a scale factor, e.g. tenths of a degree.
    U16Scaled(f64),
    /// A single status bit within the register.
    BitField(u8),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegisterPoint {
    pub point_id: String,
    pub address: u16,
    pub encoding: Encoding,
    pub unit: String,
    pub zone: String,
}

impl RegisterPoint {
    pub fn scaled(id: impl Into<String>, address: u16, scale: f64, unit: &str, zone: &str) -> Self {
        Self {
            point_id: id.into(),
            address,
            encoding: Encoding::U16Scaled(scale),
            unit: unit.to_owned(),
            zone: zone.to_owned(),
        }
    }

    pub fn bit(id: impl Into<String>, address: u16, bit: u8, zone: &str) -> Self {
        Self {
            point_id: id.into(),
            address,
            encoding: Encoding::BitField(bit),
            unit: "bool".to_owned(),
            zone: zone.to_owned(),
        }
    }

    /// Engineering value carried by a raw register.
    pub fn decode(&self, raw: u16) -> f64 {
        decode_point(self, raw)
    }

    /// Raw register contribution for `value`. Scaled values are rounded to the
    /// nearest quantum and saturate at the register limits.
    pub fn encode(&self, value: f64) -> u16 {
        match self.encoding {
            Encoding::U16Scaled(scale) => {
                let q = (value / scale).round();
                if q.is_nan() || q <= 0.0 {
                    0
                } else if q >= 65535.0 {
                    u16::MAX
                } else {
                    q as u16
                }
            }
            Encoding::BitField(bit) => {
                if value != 0.0 {
                    1 << bit
                } else {
                    0
                }
            }
        }
    }
}

pub fn decode_point(point: &RegisterPoint, raw: u16) -> f64 {
    match point.encoding {
        Encoding::U16Scaled(scale) => f64::from(raw) * scale,
        Encoding::BitField(bit) => {
            if raw & (1 << bit) != 0 {
                1.0
            } else {
                0.0
            }
        }
    }
}

/// Validated list of points. Scaled points own their register; bit-field
/// points may share one, each on a distinct bit.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RegisterMap {
    points: Vec<RegisterPoint>,
}

impl RegisterMap {
    pub fn new(points: Vec<RegisterPoint>) -> Result<Self, ModbusError> {
        let mut ids = HashSet::new();
        let mut owners: HashMap<u16, Owner> = HashMap::new();
        for p in &points {
            if p.point_id.is_empty() {
                return Err(ModbusError::InvalidMap("empty point id".into()));
            }
            if !ids.insert(p.point_id.as_str()) {
                return Err(ModbusError::InvalidMap(format!(
                    "duplicate point id {}",
                    p.point_id
                )));
            }
            let clash = || {
                ModbusError::InvalidMap(format!("address {} reused by {}", p.address, p.point_id))
            };
            match p.encoding {
                Encoding::U16Scaled(scale) => {
                    if !(scale.is_finite() && scale > 0.0) {
                        return Err(ModbusError::InvalidMap(format!(
                            "{}: scale must be positive",
                            p.point_id
                        )));
                    }
                    if owners.insert(p.address, Owner::Scaled).is_some() {
                        return Err(clash());
                    }
                }
                Encoding::BitField(bit) => {
                    if bit > 15 {
                        return Err(ModbusError::InvalidMap(format!(
                            "{}: bit {bit} out of range",
                            p.point_id
                        )));
                    }
                    match owners.entry(p.address).or_insert(Owner::Bits(0)) {
                        Owner::Scaled => return Err(clash()),
                        Owner::Bits(mask) => {
                            if *mask & (1 << bit) != 0 {
                                return Err(clash());
                            }
                            *mask |= 1 << bit;
                        }
                    }
                }
            }
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[RegisterPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn get(&self, point_id: &str) -> Option<&RegisterPoint> {
        self.points.iter().find(|p| p.point_id == point_id)
    }

    pub fn by_id(&self) -> HashMap<&str, &RegisterPoint> {
        self.points
            .iter()
            .map(|p| (p.point_id.as_str(), p))
            .collect()
    }

    /// Distinct register addresses in ascending order.
    pub fn addresses(&self) -> Vec<u16> {
        let mut a: Vec<u16> = self.points.iter().map(|p| p.address).collect();
        a.sort_unstable();
        a.dedup();
        a
    }

    /// Groups distinct addresses into runs of consecutive registers no longer
    /// than `max_len`. Each run becomes one read request.
    pub fn plan_batches(&self, max_len: u16) -> Vec<(u16, u16)> {
        let max_len = max_len.max(1);
        let mut batches: Vec<(u16, u16)> = Vec::new();
        for addr in self.addresses() {
            match batches.last_mut() {
                Some((start, len))
                    if u32::from(*start) + u32::from(*len) == u32::from(addr) && *len < max_len =>
                {
                    *len += 1
                }
                _ => batches.push((addr, 1)),
            }
        }
        batches
    }

    /// Points grouped by register address.
    pub fn points_by_address(&self) -> BTreeMap<u16, Vec<&RegisterPoint>> {
        let mut out: BTreeMap<u16, Vec<&RegisterPoint>> = BTreeMap::new();
        for p in &self.points {
            out.entry(p.address).or_default().push(p);
        }
        out
    }

    /// Reads the TSV form: `pointId address encoding scale|bit unit zone`,
    /// where encoding is `u16` or `bit`. Lines starting with `#` and a leading
    /// `pointId` header are ignored.
    pub fn read_tsv<R: BufRead>(input: R) -> Result<Self, ModbusError> {
        let mut points = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            let line_no = i + 1;
            if line.trim().is_empty() || line.starts_with('#') || line.starts_with("pointId\t") {
                continue;
            }
            let bad = |reason: String| ModbusError::MapParse {
                line: line_no,
                reason,
            };
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 6 {
                return Err(bad(format!("expected 6 fields, got {}", f.len())));
            }
            let address: u16 = f[1]
                .parse()
                .map_err(|_| bad(format!("bad address {:?}", f[1])))?;
            let encoding = match f[2] {
                "u16" => Encoding::U16Scaled(
                    f[3].parse()
                        .map_err(|_| bad(format!("bad scale {:?}", f[3])))?,
                ),
                "bit" => Encoding::BitField(
                    f[3].parse()
                        .map_err(|_| bad(format!("bad bit {:?}", f[3])))?,
                ),
                other => return Err(bad(format!("unknown encoding {other:?}"))),
            };
            points.push(RegisterPoint {
                point_id: f[0].to_owned(),
                address,
                encoding,
                unit: f[4].to_owned(),
                zone: f[5].to_owned(),
            });
        }
        Self::new(points)
    }

    pub fn load(path: &Path) -> Result<Self, ModbusError> {
        let file = std::fs::File::open(path)?;
        Self::read_tsv(std::io::BufReader::new(file))
    }

    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "pointId\taddress\tencoding\tparam\tunit\tzone")?;
        for p in &self.points {
            let (enc, param) = match p.encoding {
                Encoding::U16Scaled(s) => ("u16", s.to_string()),
                Encoding::BitField(b) => ("bit", b.to_string()),
            };
            writeln!(
                out,
                "{}\t{}\t{enc}\t{param}\t{}\t{}",
                p.point_id, p.address, p.unit, p.zone
            )?;
        }
        Ok(())
    }
}

enum Owner {
    Scaled,
    Bits(u16),
}

impl fmt::Display for Encoding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Encoding::U16Scaled(s) => write!(f, "u16*{s}"),
            Encoding::BitField(b) => write!(f, "bit{b}"),
        }
    }
}
