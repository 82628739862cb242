use std::collections::VecDeque;

/// Calendar queue over integer ticks. Pops in `(tick, insertion order)`
/// order; pushing into the tick currently being drained is allowed.
pub(crate) struct EventQueue<E> {
    base: u64,
    buckets: VecDeque<VecDeque<E>>,
    len: usize,
}

impl<E> EventQueue<E> {
    pub(crate) fn new() -> Self {
        EventQueue {
            base: 0,
            buckets: VecDeque::new(),
            len: 0,
        }
    }

    pub(crate) fn push(&mut self, at: u64, event: E) {
        assert!(at >= self.base, "event scheduled in the past");
        let idx = (at - self.base) as usize;
        if idx >= self.buckets.len() {
            self.buckets.resize_with(idx + 1, VecDeque::new);
        }
        self.buckets[idx].push_back(event);
        self.len += 1;
    }

    pub(crate) fn pop(&mut self) -> Option<(u64, E)> {
        while let Some(front) = self.buckets.front_mut() {
            if let Some(e) = front.pop_front() {
                self.len -= 1;
                return Some((self.base, e));
            }
            let mut spent = self.buckets.pop_front().expect("front exists");
            spent.clear();
            self.base += 1;
        }
        None
    }

    #[cfg(test)]
    pub(crate) fn len(&self) -> usize {
        self.len
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orders_by_tick_then_insertion() {
        let mut q = EventQueue::new();
        q.push(3, "c1");
        q.push(1, "a1");
        q.push(3, "c2");
        q.push(1, "a2");
        assert_eq!(q.pop(), Some((1, "a1")));
        q.push(1, "a3");
        q.push(2, "b1");
        let rest: Vec<_> = std::iter::from_fn(|| q.pop()).collect();
        assert_eq!(
            rest,
            vec![(1, "a2"), (1, "a3"), (2, "b1"), (3, "c1"), (3, "c2")]
        );
        assert_eq!(q.len(), 0);
    }

    #[test]
    #[should_panic(expected = "past")]
    fn rejects_past_events() {
        let mut q = EventQueue::new();
        q.push(5, 1);
        q.pop();
        q.push(4, 2);
    }
}
