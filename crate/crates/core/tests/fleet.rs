use std::collections::{BTreeMap, HashSet};

use schoolsense::analytics::{detect_outliers, OutlierConfig, Series};
use schoolsense::fleetsim::{Fleet, FleetConfig};
use schoolsense::model::ResourceId;

#[test]
fn detector_recovers_injected_outliers() {
    let fleet = Fleet::generate(FleetConfig { seed: 11, sites: 2, rooms: 4, days: 4, outlier_rate: 0.002, ..Default::default() })
        .unwrap();
    let mut stream = fleet.stream();
    let mut by_resource: BTreeMap<ResourceId, Vec<(i64, f64)>> = BTreeMap::new();
    for m in stream.by_ref() {
        by_resource.entry(m.resource_id).or_default().push((m.ts, m.value));
    }
    let injected: HashSet<(ResourceId, i64)> = stream.take_injected().into_iter().map(|o| (o.resource_id, o.ts)).collect();
    assert!(injected.len() > 50, "{}", injected.len());

    let (mut hits, mut false_flags, mut judged) = (0, 0, 0);
    for (id, pts) in by_resource {
        let rain = id.as_str().ends_with("precipitation");
        let (_, flags) = detect_outliers(&Series::new(id.clone(), "", pts).unwrap(), OutlierConfig::default()).unwrap();
        for f in flags {
            if injected.contains(&(id.clone(), f.ts)) {
                hits += 1;
            } else if !rain {
                false_flags += 1;
            }
        }
        judged += 1;
    }
    let recall = hits as f64 / injected.len() as f64;
    assert!(recall >= 0.95, "recall {recall} over {} injections", injected.len());
    assert_eq!(false_flags, 0, "{false_flags} false flags across {judged} series");
}
