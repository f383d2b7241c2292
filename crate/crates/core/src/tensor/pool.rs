use super::{Real, Result, Tensor, TensorError};

/// Argmax bookkeeping from [`maxpool2`]: flat input index per output element.
#[derive(Clone, Debug, PartialEq)]
pub struct PoolIndices {
    pub input_shape: Vec<usize>,
    pub argmax: Vec<u32>,
}

/// 2×2 max-pooling with stride 2.
///
/// Ties go to the first element of the window in row-major order.
pub fn maxpool2<T: Real>(input: &Tensor<T>) -> Result<(Tensor<T>, PoolIndices)> {
    let (c, h, w) = input.dims3("maxpool2")?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(TensorError::Invalid {
            op: "maxpool2",
            reason: format!("spatial size {h}×{w} must be even"),
        });
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Tensor::zeros(&[c, oh, ow]);
    let mut argmax = Vec::with_capacity(c * oh * ow);
    let src = input.data();
    let dst = out.data_mut();
    for ch in 0..c {
        let base = ch * h * w;
        for y in 0..oh {
            for x in 0..ow {
                let top = base + 2 * y * w + 2 * x;
                let mut best = top;
                for idx in [top + 1, top + w, top + w + 1] {
                    if src[idx] > src[best] {
                        best = idx;
                    }
                }
                dst[(ch * oh + y) * ow + x] = src[best];
                argmax.push(best as u32);
            }
        }
    }
    Ok((
        out,
        PoolIndices {
            input_shape: input.shape().to_vec(),
            argmax,
        },
    ))
}

pub fn maxpool2_backward<T: Real>(indices: &PoolIndices, upstream: &Tensor<T>) -> Result<Tensor<T>> {
    if upstream.len() != indices.argmax.len() {
        return Err(TensorError::ShapeMismatch {
            op: "maxpool2_backward",
            expected: vec![indices.argmax.len()],
            got: upstream.shape().to_vec(),
        });
    }
    let mut d_input = Tensor::zeros(&indices.input_shape);
    let d = d_input.data_mut();
    for (&i, &g) in indices.argmax.iter().zip(upstream.data()) {
        d[i as usize] += g;
    }
    Ok(d_input)
}

/// Per-channel global max and mean.
#[derive(Clone, Debug, PartialEq)]
pub struct GlobalPool<T> {
    pub max: Vec<T>,
    pub avg: Vec<T>,
    /// First spatial argmax per channel.
    pub argmax: Vec<usize>,
    pub input_shape: Vec<usize>,
}

pub fn global_pool<T: Real>(input: &Tensor<T>) -> Result<GlobalPool<T>> {
    let (c, h, w) = input.dims3("global_pool")?;
    if h == 0 || w == 0 {
        return Err(TensorError::Invalid {
            op: "global_pool",
            reason: "empty spatial extent".into(),
        });
    }
    let n = T::of((h * w) as f64);
    let mut gp = GlobalPool {
        max: Vec::with_capacity(c),
        avg: Vec::with_capacity(c),
        argmax: Vec::with_capacity(c),
        input_shape: input.shape().to_vec(),
    };
    for ch in 0..c {
        let plane = input.channel(ch);
        let mut best = 0;
        for (i, v) in plane.iter().enumerate() {
            if *v > plane[best] {
                best = i;
            }
        }
        gp.max.push(plane[best]);
        gp.argmax.push(best);
        gp.avg.push(plane.iter().copied().sum::<T>() / n);
    }
    Ok(gp)
}

/// Routes `d_max` to each channel's first argmax and spreads `d_avg` uniformly.
pub fn global_pool_backward<T: Real>(pool: &GlobalPool<T>, d_max: &[T], d_avg: &[T]) -> Result<Tensor<T>> {
    let c = pool.max.len();
    if d_max.len() != c || d_avg.len() != c {
        return Err(TensorError::ShapeMismatch {
            op: "global_pool_backward",
            expected: vec![c],
            got: vec![d_max.len(), d_avg.len()],
        });
    }
    let mut d = Tensor::zeros(&pool.input_shape);
    let plane = pool.input_shape[1] * pool.input_shape[2];
    let inv = T::one() / T::of(plane as f64);
    for ch in 0..c {
        let dc = d.channel_mut(ch);
        let share = d_avg[ch] * inv;
        dc.iter_mut().for_each(|v| *v = share);
        dc[pool.argmax[ch]] += d_max[ch];
    }
    Ok(d)
}
