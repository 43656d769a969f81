//! Physical layout of the simulated pod: zones, racks, node slots and the
//! representative register map.

use crate::modbus::{RegisterMap, RegisterPoint};

pub const STATUS_ADDR: u16 = 0;
pub const BIT_MECHANICAL_COOLING: u8 = 0;
pub const BIT_ECONOMIZER: u8 = 1;
pub const BIT_WATER_ALARM: u8 = 2;
pub const BIT_FIRE_ALARM: u8 = 3;

pub const MECHANICAL_COOLING: &str = "pod.mechanical_cooling";
pub const ECONOMIZER: &str = "pod.economizer";
pub const WATER_ALARM: &str = "pod.water_alarm";
pub const FIRE_ALARM: &str = "pod.fire_alarm";
pub const COOLING_POWER: &str = "cooling.power_kw";
pub const OUTSIDE_TEMP: &str = "pod.outside_temp";
pub const POD_ZONE: &str = "pod";

pub const FEEDS: [&str; 2] = ["feedA", "feedB"];

pub fn feed_point(feed: &str) -> String {
    format!("{feed}.power_kw")
}

pub fn zone_name(index: usize) -> String {
    format!("zone{:02}", index + 1)
}

pub fn rack_name(index: usize) -> String {
    format!("rack{:02}", index + 1)
}

pub fn host_name(index: usize) -> String {
    format!("node{:04}", index + 1)
}

/// What a register point measures, recovered from its id.
#[derive(Debug, Clone, PartialEq)]
pub enum PointRole {
    Status(u8),
    FeedPower(usize),
    CoolingPower,
    OutsideTemp,
    ZoneSupplyTemp(usize),
    ZoneReturnTemp(usize),
    ZoneHumidity(usize),
    ZonePressure(usize),
    ZoneAirflow(usize),
    RackPower(usize),
    RackHumidity(usize),
    RackInlet(usize, u32),
    RackOutlet(usize, u32),
}

fn parse_index(s: &str, prefix: &str) -> Option<usize> {
    s.strip_prefix(prefix)?
        .parse::<usize>()
        .ok()?
        .checked_sub(1)
}

impl PointRole {
    pub fn of(point_id: &str) -> Option<PointRole> {
        match point_id {
            MECHANICAL_COOLING => return Some(PointRole::Status(BIT_MECHANICAL_COOLING)),
            ECONOMIZER => return Some(PointRole::Status(BIT_ECONOMIZER)),
            WATER_ALARM => return Some(PointRole::Status(BIT_WATER_ALARM)),
            FIRE_ALARM => return Some(PointRole::Status(BIT_FIRE_ALARM)),
            COOLING_POWER => return Some(PointRole::CoolingPower),
            OUTSIDE_TEMP => return Some(PointRole::OutsideTemp),
            _ => {}
        }
        let (head, field) = point_id.split_once('.')?;
        if let Some(i) = FEEDS.iter().position(|f| *f == head) {
            return (field == "power_kw").then_some(PointRole::FeedPower(i));
        }
        if let Some(z) = parse_index(head, "zone") {
            return match field {
                "supply_temp" => Some(PointRole::ZoneSupplyTemp(z)),
                "return_temp" => Some(PointRole::ZoneReturnTemp(z)),
                "humidity" => Some(PointRole::ZoneHumidity(z)),
                "diff_pressure" => Some(PointRole::ZonePressure(z)),
                "airflow" => Some(PointRole::ZoneAirflow(z)),
                _ => None,
            };
        }
        let r = parse_index(head, "rack")?;
        match field {
            "power_kw" => Some(PointRole::RackPower(r)),
            "humidity" => Some(PointRole::RackHumidity(r)),
            _ => {
                if let Some(u) = field.strip_prefix("inlet_u") {
                    u.parse().ok().map(|u| PointRole::RackInlet(r, u))
                } else if let Some(u) = field.strip_prefix("outlet_u") {
                    u.parse().ok().map(|u| PointRole::RackOutlet(r, u))
                } else {
                    None
                }
            }
        }
    }

    pub fn is_temperature(&self) -> bool {
        matches!(
            self,
            PointRole::OutsideTemp
                | PointRole::ZoneSupplyTemp(_)
                | PointRole::ZoneReturnTemp(_)
                | PointRole::RackInlet(..)
                | PointRole::RackOutlet(..)
        )
    }
}

/// Rack of a point id like `rack07.inlet_u03`.
pub fn rack_of_point(point_id: &str) -> Option<String> {
    let head = point_id.split('.').next()?;
    parse_index(head, "rack").map(|_| head.to_owned())
}

/// Zone a rack sits in when `racks` are spread evenly over `zones`.
pub fn zone_of_rack(rack: usize, racks: usize, zones: usize) -> usize {
    let per_zone = racks.div_ceil(zones.max(1)).max(1);
    (rack / per_zone).min(zones.saturating_sub(1))
}

/// Register map with pod-level status and power points, five sensors per
/// zone, and the remainder spread round-robin over the racks (power,
/// humidity, then inlet/outlet temperature pairs at increasing heights).
///
/// `total_points` is honored exactly once it exceeds the fixed pod and zone
/// points.
pub fn representative_map(total_points: usize, racks: usize, zones: usize) -> RegisterMap {
    let mut points = Vec::with_capacity(total_points);
    let pod = POD_ZONE;
    points.push(RegisterPoint::bit(
        MECHANICAL_COOLING,
        STATUS_ADDR,
        BIT_MECHANICAL_COOLING,
        pod,
    ));
    points.push(RegisterPoint::bit(
        ECONOMIZER,
        STATUS_ADDR,
        BIT_ECONOMIZER,
        pod,
    ));
    points.push(RegisterPoint::bit(
        WATER_ALARM,
        STATUS_ADDR,
        BIT_WATER_ALARM,
        pod,
    ));
    points.push(RegisterPoint::bit(
        FIRE_ALARM,
        STATUS_ADDR,
        BIT_FIRE_ALARM,
        pod,
    ));
    let mut addr = STATUS_ADDR + 1;
    let mut next = || {
        let a = addr;
        addr += 1;
        a
    };
    for feed in FEEDS {
        points.push(RegisterPoint::scaled(
            feed_point(feed),
            next(),
            0.1,
            "kW",
            pod,
        ));
    }
    points.push(RegisterPoint::scaled(COOLING_POWER, next(), 0.1, "kW", pod));
    points.push(RegisterPoint::scaled(OUTSIDE_TEMP, next(), 0.1, "°C", pod));
    for z in 0..zones {
        let zone = zone_name(z);
        points.push(RegisterPoint::scaled(
            format!("{zone}.supply_temp"),
            next(),
            0.1,
            "°C",
            &zone,
        ));
        points.push(RegisterPoint::scaled(
            format!("{zone}.return_temp"),
            next(),
            0.1,
            "°C",
            &zone,
        ));
        points.push(RegisterPoint::scaled(
            format!("{zone}.humidity"),
            next(),
            0.1,
            "%RH",
            &zone,
        ));
        points.push(RegisterPoint::scaled(
            format!("{zone}.diff_pressure"),
            next(),
            0.1,
            "Pa",
            &zone,
        ));
        points.push(RegisterPoint::scaled(
            format!("{zone}.airflow"),
            next(),
            1.0,
            "m³/h",
            &zone,
        ));
    }
    let remaining = total_points.saturating_sub(points.len());
    if racks > 0 {
        // Rack-major order keeps each rack's registers contiguous.
        for r in 0..racks {
            let count = remaining / racks + usize::from(r < remaining % racks);
            let rack = rack_name(r);
            let zone = zone_name(zone_of_rack(r, racks, zones));
            for s in 0..count {
                let p = match s {
                    0 => {
                        RegisterPoint::scaled(format!("{rack}.power_kw"), next(), 0.01, "kW", &zone)
                    }
                    1 => {
                        RegisterPoint::scaled(format!("{rack}.humidity"), next(), 0.1, "%RH", &zone)
                    }
                    _ => {
                        let u = (s - 2) / 2 + 1;
                        let side = if (s - 2) % 2 == 0 { "inlet" } else { "outlet" };
                        RegisterPoint::scaled(
                            format!("{rack}.{side}_u{u:02}"),
                            next(),
                            0.1,
                            "°C",
                            &zone,
                        )
                    }
                };
                points.push(p);
            }
        }
    }
    RegisterMap::new(points).expect("generated map is valid")
}
