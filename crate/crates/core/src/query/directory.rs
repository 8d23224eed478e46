use std::collections::HashMap;
use std::sync::RwLock;

use crate::model::{ModelError, ResourceDescriptor, ResourceId, Topology};

use super::QueryError;

#[derive(Default)]
struct Inner {
    by_id: HashMap<ResourceId, ResourceDescriptor>,
    // device -> sensor -> id
    by_pair: HashMap<String, HashMap<String, ResourceId>>,
    order: Vec<ResourceId>,
}

/// Registry of sensing endpoints. Lookups are hash-map O(1).
#[derive(Default)]
pub struct Directory {
    inner: RwLock<Inner>,
}

impl Directory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_topology(topo: &Topology) -> Result<Self, ModelError> {
        let dir = Directory::new();
        for r in topo.resources() {
            dir.register_resource(r)
                .map_err(|e| ModelError::InvalidTopology(e.to_string()))?;
        }
        Ok(dir)
    }

    pub fn register_resource(&self, d: ResourceDescriptor) -> Result<ResourceId, QueryError> {
        if d.reporting_period == 0 {
            return Err(QueryError::InvalidDescriptor("reporting_period must be positive".into()));
        }
        let mut inner = self.inner.write().unwrap();
        if inner.by_id.contains_key(&d.resource_id)
            || inner
                .by_pair
                .get(&d.device)
                .is_some_and(|m| m.contains_key(&d.sensor))
        {
            return Err(QueryError::Duplicate(format!("{}/{}", d.device, d.sensor)));
        }
        let id = d.resource_id.clone();
        inner
            .by_pair
            .entry(d.device.clone())
            .or_default()
            .insert(d.sensor.clone(), id.clone());
        inner.order.push(id.clone());
        inner.by_id.insert(id.clone(), d);
        Ok(id)
    }

    pub fn lookup(&self, device: &str, sensor: &str) -> Option<ResourceId> {
        self.inner.read().unwrap().by_pair.get(device)?.get(sensor).cloned()
    }

    pub fn get(&self, id: &ResourceId) -> Option<ResourceDescriptor> {
        self.inner.read().unwrap().by_id.get(id).cloned()
    }

    pub fn contains(&self, id: &ResourceId) -> bool {
        self.inner.read().unwrap().by_id.contains_key(id)
    }

    /// Registered resources in registration order.
    pub fn list_resources(&self) -> Vec<ResourceDescriptor> {
        let inner = self.inner.read().unwrap();
        inner.order.iter().map(|id| inner.by_id[id].clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.inner.read().unwrap().order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
