/// Per-layer key/value cache. Rows stay in original token order; positions
/// record each row's original sequence index so pruning never reorders
/// anything.
#[derive(Debug, Clone, Default)]
pub struct LayerKv {
    pub keys: Vec<Vec<f64>>,
    pub values: Vec<Vec<f64>>,
    pub positions: Vec<usize>,
}

impl LayerKv {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn push(&mut self, key: Vec<f64>, value: Vec<f64>, position: usize) {
        self.keys.push(key);
        self.values.push(value);
        self.positions.push(position);
    }

    /// Keep only the rows at the given cache indices (sorted ascending).
    pub fn retain_rows(&mut self, kept: &[usize]) {
        self.keys = kept.iter().map(|&i| self.keys[i].clone()).collect();
        self.values = kept.iter().map(|&i| self.values[i].clone()).collect();
        self.positions = kept.iter().map(|&i| self.positions[i]).collect();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn retain_preserves_order_and_positions() {
        let mut kv = LayerKv::default();
        for i in 0..5 {
            kv.push(vec![i as f64], vec![-(i as f64)], i);
        }
        kv.retain_rows(&[0, 2, 4]);
        assert_eq!(kv.len(), 3);
        assert_eq!(kv.positions, vec![0, 2, 4]);
        assert_eq!(kv.keys[1], vec![2.0]);
        assert_eq!(kv.values[2], vec![-4.0]);
    }
}
