use std::sync::atomic::{AtomicBool, Ordering::SeqCst};

use super::ThreadId;
use crate::error::{Error, Result};

/// Fixed pool of thread ids handed out to worker threads.
#[derive(Debug)]
pub struct ThreadRegistry {
    slots: Box<[AtomicBool]>,
}

impl ThreadRegistry {
    pub fn new(max_threads: usize) -> Result<Self> {
        if max_threads == 0 {
            return Err(Error::InvalidMaxThreads);
        }
        Ok(ThreadRegistry {
            slots: (0..max_threads).map(|_| AtomicBool::new(false)).collect(),
        })
    }

    pub fn max_threads(&self) -> usize {
        self.slots.len()
    }

    /// Claims the lowest free id. The id is released when the returned
    /// [`Registration`] is dropped.
    pub fn register(&self) -> Result<Registration<'_>> {
        for (i, slot) in self.slots.iter().enumerate() {
            if slot
                .compare_exchange(false, true, SeqCst, SeqCst)
                .is_ok()
            {
                return Ok(Registration {
                    registry: self,
                    id: ThreadId::new(i),
                });
            }
        }
        Err(Error::ThreadPoolExhausted {
            max: self.slots.len(),
        })
    }

    pub fn registered(&self) -> usize {
        self.slots.iter().filter(|s| s.load(SeqCst)).count()
    }
}

#[derive(Debug)]
pub struct Registration<'a> {
    registry: &'a ThreadRegistry,
    id: ThreadId,
}

impl Registration<'_> {
    pub fn id(&self) -> ThreadId {
        self.id
    }
}

impl Drop for Registration<'_> {
    fn drop(&mut self) {
        self.registry.slots[self.id.index()].store(false, SeqCst);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hands_out_distinct_ids_and_recycles() {
        let reg = ThreadRegistry::new(2).unwrap();
        let a = reg.register().unwrap();
        let b = reg.register().unwrap();
        assert_ne!(a.id(), b.id());
        assert!(matches!(
            reg.register(),
            Err(Error::ThreadPoolExhausted { max: 2 })
        ));
        let freed = a.id();
        drop(a);
        assert_eq!(reg.register().unwrap().id(), freed);
        assert_eq!(reg.registered(), 1);
    }

    #[test]
    fn rejects_empty_pool() {
        assert!(matches!(ThreadRegistry::new(0), Err(Error::InvalidMaxThreads)));
    }
}
