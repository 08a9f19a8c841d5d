//! Truncated symmetric mode lattice `{k in Z^3 : max_i |k_i| <= k_max}`.

use crate::error::GridError;

/// Full cube of retained modes. Mode `m` and its negative sit at `m` and `len - 1 - m`.
#[derive(Debug, Clone)]
pub struct Lattice {
    k_max: i32,
    side: usize,
    modes: Vec<[i32; 3]>,
    k2: Vec<f64>,
}

impl Lattice {
    pub fn new(k_max: i32) -> Result<Self, GridError> {
        if k_max < 1 {
            return Err(GridError::BadKmax(k_max));
        }
        let side = (2 * k_max + 1) as usize;
        let mut modes = Vec::with_capacity(side * side * side);
        for a in -k_max..=k_max {
            for b in -k_max..=k_max {
                for c in -k_max..=k_max {
                    modes.push([a, b, c]);
                }
            }
        }
        let k2 = modes.iter().map(|k| norm2(*k)).collect();
        Ok(Self { k_max, side, modes, k2 })
    }

    pub fn k_max(&self) -> i32 {
        self.k_max
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn modes(&self) -> &[[i32; 3]] {
        &self.modes
    }

    pub fn mode(&self, m: usize) -> [i32; 3] {
        self.modes[m]
    }

    /// |k|^2 for mode `m`.
    pub fn k2(&self, m: usize) -> f64 {
        self.k2[m]
    }

    pub fn k2_table(&self) -> &[f64] {
        &self.k2
    }

    pub fn zero_index(&self) -> usize {
        self.modes.len() / 2
    }

    pub fn neg_index(&self, m: usize) -> usize {
        self.modes.len() - 1 - m
    }

    pub fn contains(&self, k: [i32; 3]) -> bool {
        k.iter().all(|c| c.abs() <= self.k_max)
    }

    pub fn index(&self, k: [i32; 3]) -> Option<usize> {
        if !self.contains(k) {
            return None;
        }
        let s = self.side;
        let o = self.k_max;
        Some((((k[0] + o) as usize) * s + (k[1] + o) as usize) * s + (k[2] + o) as usize)
    }

    /// Indices of one representative of each `{k, -k}` pair with `k != 0`.
    pub fn half_indices(&self) -> std::ops::Range<usize> {
        self.zero_index() + 1..self.len()
    }
}

pub fn norm2(k: [i32; 3]) -> f64 {
    let [a, b, c] = k;
    (a * a + b * b + c * c) as f64
}

pub fn as_f64(k: [i32; 3]) -> [f64; 3] {
    [k[0] as f64, k[1] as f64, k[2] as f64]
}

pub fn add(a: [i32; 3], b: [i32; 3]) -> [i32; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn sub(a: [i32; 3], b: [i32; 3]) -> [i32; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn neg(a: [i32; 3]) -> [i32; 3] {
    [-a[0], -a[1], -a[2]]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn negation_is_mirror_index() {
        let lat = Lattice::new(3).unwrap();
        for m in 0..lat.len() {
            let k = lat.mode(m);
            assert_eq!(lat.index(neg(k)), Some(lat.neg_index(m)));
            assert_eq!(lat.index(k), Some(m));
        }
        assert_eq!(lat.mode(lat.zero_index()), [0, 0, 0]);
    }

    #[test]
    fn half_covers_each_pair_once() {
        let lat = Lattice::new(2).unwrap();
        let mut seen = vec![0u8; lat.len()];
        for m in lat.half_indices() {
            seen[m] += 1;
            seen[lat.neg_index(m)] += 1;
        }
        seen[lat.zero_index()] += 1;
        assert!(seen.iter().all(|&s| s == 1));
    }
}
