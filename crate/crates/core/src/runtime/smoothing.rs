/// Centered moving average; the window shrinks symmetrically at the ends.
pub fn moving_average(v: &[f64], window: usize) -> Vec<f64> {
    let half = window / 2;
    (0..v.len())
        .map(|k| {
            let r = half.min(k).min(v.len() - 1 - k);
            let s = &v[k - r..=k + r];
            s.iter().sum::<f64>() / s.len() as f64
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_is_fixed_point() {
        assert_eq!(moving_average(&[2.0; 30], 15), vec![2.0; 30]);
    }

    #[test]
    fn interior_point_averages_fifteen() {
        let v: Vec<f64> = (0..40).map(|k| k as f64).collect();
        let s = moving_average(&v, 15);
        assert_eq!(s[20], 20.0);
        assert_eq!(s[0], 0.0);
        assert_eq!(s[1], 1.0);
    }
}
