//! GF(2^8) arithmetic with primitive polynomial x^8 + x^4 + x^3 + x^2 + 1
//! (0x11D). Addition is XOR; multiplication goes through log/antilog tables
//! built at compile time from the generator 2.

/// One element of GF(2^8).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Gf256(pub u8);

const POLY: u16 = 0x11D;

const fn build_tables() -> ([u8; 256], [u8; 512]) {
    let mut log = [0u8; 256];
    let mut exp = [0u8; 512];
    let mut x: u16 = 1;
    let mut i = 0;
    while i < 255 {
        exp[i] = x as u8;
        exp[i + 255] = x as u8; // doubled so mul can skip the mod 255
        log[x as usize] = i as u8;
        x <<= 1;
        if x & 0x100 != 0 {
            x ^= POLY;
        }
        i += 1;
    }
    exp[510] = exp[255];
    exp[511] = exp[256];
    (log, exp)
}

const TABLES: ([u8; 256], [u8; 512]) = build_tables();
const LOG: [u8; 256] = TABLES.0;
const EXP: [u8; 512] = TABLES.1;

impl Gf256 {
    pub const ZERO: Gf256 = Gf256(0);
    pub const ONE: Gf256 = Gf256(1);

    #[inline]
    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    /// Multiplicative inverse; `None` for zero.
    pub fn inverse(self) -> Option<Gf256> {
        if self.0 == 0 {
            None
        } else {
            Some(Gf256(EXP[255 - LOG[self.0 as usize] as usize]))
        }
    }
}

#[inline]
pub fn add(a: Gf256, b: Gf256) -> Gf256 {
    Gf256(a.0 ^ b.0)
}

#[inline]
pub fn mul(a: Gf256, b: Gf256) -> Gf256 {
    if a.0 == 0 || b.0 == 0 {
        return Gf256(0);
    }
    Gf256(EXP[LOG[a.0 as usize] as usize + LOG[b.0 as usize] as usize])
}

/// a / b. Panics on division by zero.
#[inline]
pub fn div(a: Gf256, b: Gf256) -> Gf256 {
    mul(a, b.inverse().expect("division by zero in GF(256)"))
}

impl std::ops::Add for Gf256 {
    type Output = Gf256;
    fn add(self, rhs: Gf256) -> Gf256 {
        add(self, rhs)
    }
}

impl std::ops::Mul for Gf256 {
    type Output = Gf256;
    fn mul(self, rhs: Gf256) -> Gf256 {
        mul(self, rhs)
    }
}
