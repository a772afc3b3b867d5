use rand::Rng;

/// One recorded decision. States are stored packed as `f32`.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Box<[f32]>,
    pub action: u8,
    pub reward: f64,
    pub next_state: Box<[f32]>,
    pub terminal: bool,
}

/// Fixed-capacity ring buffer of transitions.
#[derive(Debug, Clone)]
pub struct ReplayMemory {
    capacity: usize,
    items: Vec<Transition>,
    head: usize,
}

impl ReplayMemory {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        ReplayMemory {
            capacity,
            items: Vec::new(),
            head: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.head] = t;
            self.head = (self.head + 1) % self.capacity;
        }
    }

    /// `batch` distinct transitions chosen uniformly, or None if too few.
    pub fn sample(&self, batch: usize, rng: &mut impl Rng) -> Option<Vec<&Transition>> {
        if self.items.len() < batch {
            return None;
        }
        Some(
            rand::seq::index::sample(rng, self.items.len(), batch)
                .into_iter()
                .map(|i| &self.items[i])
                .collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t(r: f64) -> Transition {
        Transition {
            state: vec![0.0; 2].into(),
            action: 0,
            reward: r,
            next_state: vec![0.0; 2].into(),
            terminal: false,
        }
    }

    #[test]
    fn ring_buffer_overwrites_oldest() {
        let mut m = ReplayMemory::new(3);
        for i in 0..5 {
            m.push(t(i as f64));
        }
        assert_eq!(m.len(), 3);
        let mut rewards: Vec<f64> = m.items.iter().map(|t| t.reward).collect();
        rewards.sort_by(f64::total_cmp);
        assert_eq!(rewards, vec![2.0, 3.0, 4.0]);
    }

    #[test]
    fn sampling_is_without_replacement() {
        let mut m = ReplayMemory::new(100);
        for i in 0..10 {
            m.push(t(i as f64));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(m.sample(11, &mut rng).is_none());
        let batch = m.sample(10, &mut rng).unwrap();
        let mut rewards: Vec<f64> = batch.iter().map(|t| t.reward).collect();
        rewards.sort_by(f64::total_cmp);
        assert_eq!(rewards, (0..10).map(|i| i as f64).collect::<Vec<_>>());
    }
}
