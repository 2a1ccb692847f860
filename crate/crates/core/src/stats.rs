//! Sample moments with plug-in standard errors.

/// Sample mean and its standard error.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Sample covariance and its standard error, from the spread of the
/// centered products.
pub fn covariance_se(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let products: Vec<f64> = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (x - mx) * (y - my))
        .collect();
    let (mean_product, se) = mean_se(&products);
    (mean_product * n / (n - 1.0), se)
}

/// Sample variance and its standard error.
pub fn variance_se(xs: &[f64]) -> (f64, f64) {
    covariance_se(xs, xs)
}
