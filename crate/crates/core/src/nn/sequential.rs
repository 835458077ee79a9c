use super::{Layer, LayerCache, Tensor};
use crate::error::{Error, Result};

/// An ordered chain of layers.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Sequential {
    pub layers: Vec<Layer>,
}

impl Sequential {
    pub fn new(layers: Vec<Layer>) -> Self {
        Self { layers }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.layers
            .iter()
            .try_fold(x.clone(), |h, layer| layer.forward(&h))
    }

    /// Every intermediate output, one per layer.
    pub fn trace(&self, x: &Tensor) -> Result<Vec<Tensor>> {
        let mut outs: Vec<Tensor> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let y = layer.forward(outs.last().unwrap_or(x))?;
            outs.push(y);
        }
        Ok(outs)
    }

    pub fn forward_cached(&self, x: &Tensor) -> Result<(Tensor, Vec<LayerCache>)> {
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for layer in &self.layers {
            let (y, cache) = layer.forward_cached(&h)?;
            caches.push(cache);
            h = y;
        }
        Ok((h, caches))
    }

    /// Reverse pass. Parameter gradients come back in [`Sequential::params`] order.
    pub fn backward(
        &self,
        caches: &[LayerCache],
        grad_out: &Tensor,
    ) -> Result<(Tensor, Vec<Tensor>)> {
        if caches.len() != self.layers.len() {
            return Err(Error::State(format!(
                "backward got {} cached activations for {} layers; run a cached forward pass first",
                caches.len(),
                self.layers.len()
            )));
        }
        let mut per_layer = Vec::with_capacity(self.layers.len());
        let mut g = grad_out.clone();
        for (layer, cache) in self.layers.iter().zip(caches).rev() {
            let (gx, pg) = layer.backward(cache, &g)?;
            per_layer.push(pg);
            g = gx;
        }
        Ok((g, per_layer.into_iter().rev().flatten().collect()))
    }

    pub fn params(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.params_mut())
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.param_count()).sum()
    }

    /// Input shape of every layer followed by the final output shape.
    pub fn shape_chain(&self, input: &[usize]) -> Result<Vec<Vec<usize>>> {
        let mut shapes = vec![input.to_vec()];
        for layer in &self.layers {
            let next = layer.output_shape(shapes.last().unwrap())?;
            shapes.push(next);
        }
        Ok(shapes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Dense, Init};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = Sequential::new(vec![
            Layer::Dense(Dense::new(4, 3, Init::He, &mut rng)),
            Layer::Relu,
            Layer::Dense(Dense::new(3, 2, Init::LeCun, &mut rng)),
        ]);
        let x = Tensor::from_fn(&[2, 4], |i| i as f64 * 0.1 - 0.3);
        let (y, caches) = net.forward_cached(&x).unwrap();
        let (gx, grads) = net.backward(&caches, &Tensor::zeros(y.shape())).unwrap();
        assert!(gx.data().iter().all(|&v| v == 0.0));
        assert_eq!(grads.len(), 4);
        assert!(grads.iter().all(|g| g.data().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn backward_without_forward_is_state_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = Sequential::new(vec![
            Layer::Dense(Dense::new(2, 2, Init::He, &mut rng)),
            Layer::Relu,
        ]);
        assert!(matches!(
            net.backward(&[], &Tensor::zeros(&[2])),
            Err(Error::State(_))
        ));
    }
}
