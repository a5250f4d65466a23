//! Deterministic segmented sieve of Eratosthenes.

const SEGMENT: u64 = 1 << 18;

fn simple_sieve(limit: u64) -> Vec<u64> {
    if limit < 2 {
        return Vec::new();
    }
    let n = limit as usize;
    let mut composite = vec![false; n + 1];
    let mut out = Vec::new();
    for i in 2..=n {
        if !composite[i] {
            out.push(i as u64);
            let mut j = i * i;
            while j <= n {
                composite[j] = true;
                j += i;
            }
        }
    }
    out
}

/// Streams primes in increasing order, one segment at a time.
pub struct PrimeStream {
    base: Vec<u64>,
    base_limit: u64,
    lo: u64,
    buf: Vec<u64>,
    pos: usize,
}

impl PrimeStream {
    pub fn new() -> Self {
        PrimeStream {
            base: Vec::new(),
            base_limit: 1,
            lo: 2,
            buf: Vec::new(),
            pos: 0,
        }
    }

    fn refill(&mut self) {
        let hi = self.lo + SEGMENT;
        let need = (hi as f64).sqrt() as u64 + 1;
        if need > self.base_limit {
            let limit = need.max(self.base_limit * 2);
            self.base = simple_sieve(limit);
            self.base_limit = limit;
        }
        let mut composite = vec![false; SEGMENT as usize];
        for &p in &self.base {
            if p * p >= hi {
                break;
            }
            let mut start = (self.lo + p - 1) / p * p;
            if start < p * p {
                start = p * p;
            }
            let mut j = start;
            while j < hi {
                composite[(j - self.lo) as usize] = true;
                j += p;
            }
        }
        self.buf.clear();
        for (i, &c) in composite.iter().enumerate() {
            if !c {
                self.buf.push(self.lo + i as u64);
            }
        }
        self.pos = 0;
        self.lo = hi;
    }
}

impl Default for PrimeStream {
    fn default() -> Self {
        Self::new()
    }
}

impl Iterator for PrimeStream {
    type Item = u64;

    fn next(&mut self) -> Option<u64> {
        while self.pos >= self.buf.len() {
            self.refill();
        }
        let p = self.buf[self.pos];
        self.pos += 1;
        Some(p)
    }
}

pub fn first_primes(n: usize) -> Vec<u64> {
    PrimeStream::new().take(n).collect()
}

pub fn primes_below(limit: u64) -> Vec<u64> {
    PrimeStream::new().take_while(|&p| p < limit).collect()
}

pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2;
    while d * d <= n {
        if n % d == 0 {
            return false;
        }
        d += 1;
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_trial_division_across_segments() {
        let limit = 3 * SEGMENT + 12345;
        let sieved = primes_below(limit);
        let mut brute = Vec::new();
        let mut n = 2;
        while n < limit {
            if is_prime(n) {
                brute.push(n);
            }
            n += 1;
        }
        assert_eq!(sieved, brute);
    }

    #[test]
    fn first_few() {
        assert_eq!(first_primes(5), vec![2, 3, 5, 7, 11]);
    }
}
