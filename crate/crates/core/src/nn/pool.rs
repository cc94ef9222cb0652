//! Non-overlapping max pooling over frequency and time.

use crate::error::{Error, Result};
use crate::tensor::{FeatureMap, Scalar};

/// Flat argmax indices (into the input map) per output cell.
#[derive(Debug, Clone)]
pub struct PoolCache {
    pub argmax: Vec<usize>,
    input_shape: (usize, usize, usize),
}

pub fn maxpool<F: Scalar>(input: &FeatureMap<F>, pool_f: usize, pool_t: usize) -> Result<FeatureMap<F>> {
    maxpool_forward(input, pool_f, pool_t).map(|(out, _)| out)
}

pub fn maxpool_forward<F: Scalar>(
    input: &FeatureMap<F>,
    pool_f: usize,
    pool_t: usize,
) -> Result<(FeatureMap<F>, PoolCache)> {
    if pool_f == 0 || pool_t == 0 {
        return Err(Error::InvalidConfig("pool sizes must be positive".into()));
    }
    let (c, nf, nt) = input.shape();
    if nf % pool_f != 0 {
        return Err(Error::NotDivisible { dim: "frequency", size: nf, pool: pool_f });
    }
    if nt % pool_t != 0 {
        return Err(Error::NotDivisible { dim: "time", size: nt, pool: pool_t });
    }
    let of = nf / pool_f;
    let ot = nt / pool_t;
    let mut out = FeatureMap::zeros(c, of, ot);
    let mut argmax = vec![0usize; c * of * ot];
    for ch in 0..c {
        for f_out in 0..of {
            for t_out in 0..ot {
                let mut best = None::<(F, usize)>;
                // First maximal element in (frequency, time) scan order wins ties.
                for df in 0..pool_f {
                    let f_in = f_out * pool_f + df;
                    for dt in 0..pool_t {
                        let t_in = t_out * pool_t + dt;
                        let v = input.get(ch, f_in, t_in);
                        let flat = (ch * nf + f_in) * nt + t_in;
                        match best {
                            Some((b, _)) if v <= b => {}
                            _ => best = Some((v, flat)),
                        }
                    }
                }
                let (v, flat) = best.expect("non-empty window");
                out.set(ch, f_out, t_out, v);
                argmax[(ch * of + f_out) * ot + t_out] = flat;
            }
        }
    }
    Ok((out, PoolCache { argmax, input_shape: (c, nf, nt) }))
}

/// Route each output gradient back to its argmax element.
pub fn maxpool_backward<F: Scalar>(cache: &PoolCache, d_out: &FeatureMap<F>, d_input: &mut FeatureMap<F>) {
    assert_eq!(d_input.shape(), cache.input_shape, "pool backward input shape");
    assert_eq!(d_out.data().len(), cache.argmax.len(), "pool backward output shape");
    let data = d_input.data_mut();
    for (&flat, &g) in cache.argmax.iter().zip(d_out.data()) {
        data[flat] += g;
    }
}
