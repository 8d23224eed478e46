//! Pure aggregation folds: raw events into five-minute summaries, power
//! estimation from current samples, and the roll-up rule for coarser
//! granularities.

use crate::model::{align, AggregationType, Granularity, IntervalKey, IntervalSummary, ResourceId};
use crate::scalar::{clamp, mean, Scalar};

use super::EngineError;

/// Default nominal voltage per phase.
pub const DEFAULT_NOMINAL_VOLTAGE: f64 = 230.0;

/// Average power and energy of an interval from current samples.
///
/// `avg_power = v_nom * mean(amps)`, `energy = avg_power * width / 3600 s`.
pub fn aggregate_power<T: Scalar>(
    current_values: &[(T, i64)],
    interval: IntervalKey,
    v_nom: T,
) -> Result<(T, T), EngineError> {
    let mean_amps = mean(current_values.iter().map(|(a, _)| *a)).ok_or(EngineError::NoSamples)?;
    if let Some((_, ts)) = current_values.iter().find(|(_, ts)| !interval.contains(*ts)) {
        return Err(EngineError::SampleOutsideInterval(*ts));
    }
    let avg_power = v_nom * mean_amps;
    let hours = T::from_i64(interval.width_ms()).unwrap() / T::lit(3_600_000.0);
    Ok((avg_power, avg_power * hours))
}

/// Summary of the raw events of one five-minute interval.
pub(crate) fn summarize_events<T: Scalar>(
    resource_id: &ResourceId,
    key: IntervalKey,
    agg: AggregationType,
    v_nom: T,
    events: impl Iterator<Item = (i64, T)> + Clone,
) -> Result<IntervalSummary<T>, EngineError> {
    let mut count = 0u64;
    let mut sum = T::zero();
    let mut lo = T::infinity();
    let mut hi = T::neg_infinity();
    for (_, v) in events.clone() {
        count += 1;
        sum = sum + v;
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if count == 0 {
        return Err(EngineError::NoSamples);
    }
    let avg = clamp(sum / T::from_u64(count).unwrap(), lo, hi);
    let mut s = IntervalSummary {
        resource_id: resource_id.clone(),
        interval: key,
        avg,
        min: lo,
        max: hi,
        count,
        total: None,
        energy_wh: None,
    };
    match agg {
        AggregationType::Average => {}
        AggregationType::Total => s.total = Some(sum),
        AggregationType::Power => {
            let samples: Vec<(T, i64)> = events.map(|(ts, v)| (v, ts)).collect();
            let (avg_power, energy) = aggregate_power(&samples, key, v_nom)?;
            s.min = v_nom * lo;
            s.max = v_nom * hi;
            s.avg = clamp(avg_power, s.min, s.max);
            s.energy_wh = Some(energy);
        }
    }
    Ok(s)
}

/// Derive the summary at granularity `g` from its child summaries.
///
/// The parent average is the unweighted mean of the children's averages;
/// min/max are taken over the children's extrema and counts are summed.
/// TOTAL sums the children's totals, POWER sums their energies.
pub fn roll_up<'a, T: Scalar, I>(
    children: I,
    g: Granularity,
    agg: AggregationType,
) -> Result<IntervalSummary<T>, EngineError>
where
    I: IntoIterator<Item = &'a IntervalSummary<T>>,
{
    let mut children = children.into_iter().peekable();
    let first = *children.peek().ok_or(EngineError::EmptyChildren)?;
    let key = align(first.interval.start, g);
    let mut n = 0usize;
    let mut count = 0u64;
    let mut lo = T::infinity();
    let mut hi = T::neg_infinity();
    let mut avg_sum = T::zero();
    let mut total = T::zero();
    let mut energy = T::zero();
    for c in children {
        n += 1;
        if c.interval.granularity >= g || !key.contains(c.interval.start) {
            return Err(EngineError::ChildOutsideParent(c.interval));
        }
        count += c.count;
        lo = lo.min(c.min);
        hi = hi.max(c.max);
        avg_sum = avg_sum + c.avg;
        total = total + c.total.unwrap_or_else(T::zero);
        energy = energy + c.energy_wh.unwrap_or_else(T::zero);
    }
    let avg = clamp(avg_sum / T::from_count(n), lo, hi);
    Ok(IntervalSummary {
        resource_id: first.resource_id.clone(),
        interval: key,
        avg,
        min: lo,
        max: hi,
        count,
        total: (agg == AggregationType::Total).then_some(total),
        energy_wh: (agg == AggregationType::Power).then(|| energy.max(T::zero())),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{parse_time, MS_PER_MINUTE};

    fn rid() -> ResourceId {
        ResourceId::new("r1").unwrap()
    }

    fn child(g: Granularity, start: i64, avg: f64, min: f64, max: f64, count: u64) -> IntervalSummary<f64> {
        IntervalSummary {
            resource_id: rid(),
            interval: IntervalKey { granularity: g, start },
            avg,
            min,
            max,
            count,
            total: None,
            energy_wh: None,
        }
    }

    #[test]
    fn day_extrema_come_from_hours() {
        let day = parse_time("2017-09-30").unwrap();
        let hours: Vec<_> = [5.0, 7.0, 3.0]
            .iter()
            .enumerate()
            .map(|(i, v)| child(Granularity::Hour, day + i as i64 * 3_600_000, *v, *v, *v, 12))
            .collect();
        let d = roll_up(&hours, Granularity::Day, AggregationType::Average).unwrap();
        assert_eq!((d.min, d.max), (3.0, 7.0));
        assert_eq!(d.avg, 5.0);
        assert_eq!(d.count, 36);
    }

    #[test]
    fn total_is_additive() {
        let h = parse_time("2017-09-30T10:00:00Z").unwrap();
        let mut a = child(Granularity::FiveMin, h, 1.5, 0.5, 1.0, 2);
        a.total = Some(1.5);
        let mut b = child(Granularity::FiveMin, h + 5 * MS_PER_MINUTE, 2.5, 1.0, 1.5, 2);
        b.total = Some(2.5);
        let p = roll_up(&[a, b], Granularity::Hour, AggregationType::Total).unwrap();
        assert_eq!(p.total, Some(4.0));
    }

    #[test]
    fn mean_of_means_ignores_counts() {
        let h = parse_time("2017-09-30T10:00:00Z").unwrap();
        let a = child(Granularity::FiveMin, h, 10.0, 10.0, 10.0, 1);
        let b = child(Granularity::FiveMin, h + 5 * MS_PER_MINUTE, 20.0, 20.0, 20.0, 9);
        let p = roll_up(&[a, b], Granularity::Hour, AggregationType::Average).unwrap();
        // Event-weighted mean would be (10 + 9 * 20) / 10 = 19.
        let weighted = (10.0 + 9.0 * 20.0) / 10.0;
        assert_eq!(weighted, 19.0);
        assert_eq!(p.avg, 15.0);
        assert_eq!(p.count, 10);
    }

    #[test]
    fn roll_up_errors() {
        assert_eq!(
            roll_up::<f64, _>(&[], Granularity::Hour, AggregationType::Average),
            Err(EngineError::EmptyChildren)
        );
        let h = parse_time("2017-09-30T10:00:00Z").unwrap();
        let a = child(Granularity::FiveMin, h, 1.0, 1.0, 1.0, 1);
        let b = child(Granularity::FiveMin, h + 3_600_000, 1.0, 1.0, 1.0, 1);
        assert!(matches!(
            roll_up(&[a, b], Granularity::Hour, AggregationType::Average),
            Err(EngineError::ChildOutsideParent(_))
        ));
    }

    #[test]
    fn power_from_current() {
        let key = align(parse_time("2017-09-30T10:00:00Z").unwrap(), Granularity::FiveMin);
        let at = |i: i64| key.start + i * 30_000;
        let (p, e) = aggregate_power::<f64>(&[(10.0, at(0)), (10.0, at(5))], key, 230.0).unwrap();
        assert_eq!(p, 2300.0);
        assert!((e - 191.666_666_666_666_67).abs() < 1e-9);

        let (p, e) = aggregate_power(&[(0.0, at(1))], key, 230.0).unwrap();
        assert_eq!((p, e), (0.0, 0.0));

        // Oracle: direct mean then multiply.
        let amps = [5.0, 15.0];
        let oracle_p = 230.0 * (amps[0] + amps[1]) / 2.0;
        let oracle_e = oracle_p * 300.0 / 3600.0;
        let (p, e) = aggregate_power::<f64>(&[(5.0, at(0)), (15.0, at(1))], key, 230.0).unwrap();
        assert_eq!(p, oracle_p);
        assert!((e - oracle_e).abs() < 1e-9);
        assert!((e - 191.667).abs() < 1e-3);

        assert_eq!(aggregate_power::<f64>(&[], key, 230.0), Err(EngineError::NoSamples));
        assert!(matches!(
            aggregate_power(&[(1.0, key.end())], key, 230.0),
            Err(EngineError::SampleOutsideInterval(_))
        ));
    }

    #[test]
    fn works_in_single_precision() {
        let key = align(parse_time("2017-09-30T10:00:00Z").unwrap(), Granularity::FiveMin);
        let (p, _) = aggregate_power(&[(10.0f32, key.start)], key, 230.0).unwrap();
        assert_eq!(p, 2300.0f32);
    }
}
