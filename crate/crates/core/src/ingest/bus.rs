use std::sync::Arc;

use crate::model::{ResourceDescriptor, ResourceId, ResourceKind, Reading, DEFAULT_REPORTING_PERIOD};
use crate::query::Directory;
use crate::scalar::Scalar;

use super::IngestError;

/// One message as published on the bus: `<device>/<sensor>` and a value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BusMessage {
    pub topic: String,
    pub payload: String,
}

impl BusMessage {
    pub fn new(topic: impl Into<String>, payload: impl Into<String>) -> Self {
        BusMessage { topic: topic.into(), payload: payload.into() }
    }

    /// Socket line form `topic\tpayload` (no trailing newline).
    pub fn to_line(&self) -> String {
        format!("{}\t{}", self.topic, self.payload)
    }

    pub fn from_line(line: &str) -> Result<Self, IngestError> {
        let line = line.trim_end_matches(['\r', '\n']);
        match line.split_once('\t') {
            Some((topic, payload)) if !topic.is_empty() => Ok(BusMessage::new(topic, payload)),
            _ => Err(IngestError::MalformedLine(line.to_string())),
        }
    }
}

/// Split a topic into `(device, sensor)`.
pub fn split_topic(topic: &str) -> Result<(&str, &str), IngestError> {
    let mut parts = topic.split('/');
    match (parts.next(), parts.next(), parts.next()) {
        (Some(d), Some(s), None) if !d.is_empty() && !s.is_empty() => Ok((d, s)),
        _ => Err(IngestError::MalformedTopic(topic.to_string())),
    }
}

/// Parse `value` or `value@epoch_ms`.
pub fn parse_payload<T: Scalar>(payload: &str) -> Result<(T, Option<i64>), IngestError> {
    let bad = || IngestError::MalformedPayload(payload.to_string());
    let (value, ts) = match payload.trim().split_once('@') {
        Some((v, ts)) => (v, Some(ts.parse::<i64>().map_err(|_| bad())?)),
        None => (payload.trim(), None),
    };
    let v: T = value.parse().map_err(|_| bad())?;
    if !v.is_finite() || ts.is_some_and(|t| t <= 0) {
        return Err(bad());
    }
    Ok((v, ts))
}

/// Inverse of parsing: canonical topic and payload for a reading.
pub fn format_bus_message<T: Scalar>(r: &Reading<T>, with_timestamp: bool) -> BusMessage {
    let payload = if with_timestamp { format!("{}@{}", r.value, r.timestamp) } else { r.value.to_string() };
    BusMessage { topic: format!("{}/{}", r.device, r.sensor), payload }
}

/// Message-bus API mapper: translates bus messages into readings.
pub struct BusMapper {
    directory: Arc<Directory>,
    auto_register: bool,
}

impl BusMapper {
    pub fn new(directory: Arc<Directory>) -> Self {
        BusMapper { directory, auto_register: false }
    }

    /// Register unknown `(device, sensor)` pairs on first sight.
    pub fn with_auto_register(mut self, on: bool) -> Self {
        self.auto_register = on;
        self
    }

    pub fn directory(&self) -> &Arc<Directory> {
        &self.directory
    }

    /// Exactly one of a reading, `MalformedTopic`, `MalformedPayload` or
    /// `UnknownResource` for every input.
    pub fn parse_bus_message<T: Scalar>(&self, msg: &BusMessage, now: i64) -> Result<Reading<T>, IngestError> {
        let (device, sensor) = split_topic(&msg.topic)?;
        let (value, ts) = parse_payload::<T>(&msg.payload)?;
        let resource_id = match self.directory.lookup(device, sensor) {
            Some(id) => id,
            None if self.auto_register => self.register(device, sensor)?,
            None => {
                return Err(IngestError::UnknownResource { device: device.to_string(), sensor: sensor.to_string() })
            }
        };
        Ok(Reading {
            resource_id,
            device: device.to_string(),
            sensor: sensor.to_string(),
            value,
            timestamp: ts.unwrap_or(now),
        })
    }

    fn register(&self, device: &str, sensor: &str) -> Result<ResourceId, IngestError> {
        let unknown = || IngestError::UnknownResource { device: device.to_string(), sensor: sensor.to_string() };
        let id = ResourceId::new(format!("{device}.{sensor}")).map_err(|_| unknown())?;
        let kind = if sensor.starts_with("current") || sensor == "power" {
            ResourceKind::Power
        } else {
            ResourceKind::Environmental
        };
        let desc = ResourceDescriptor {
            resource_id: id,
            device: device.to_string(),
            sensor: sensor.to_string(),
            kind,
            units: String::new(),
            reporting_period: DEFAULT_REPORTING_PERIOD,
            site_id: "unassigned".into(),
            room_id: None,
        };
        match self.directory.register_resource(desc) {
            Ok(id) => Ok(id),
            // lost a race with another mapper
            Err(_) => self.directory.lookup(device, sensor).ok_or_else(unknown),
        }
    }
}
