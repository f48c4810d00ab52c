use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating point scalar the kernel, tree and layouts are generic over.
///
/// Sealed to `f32` and `f64`. The `Pod` bound lets particle records live
/// inside a raw, strided byte buffer.
pub trait Real:
    private::Sealed
    + Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + bytemuck::Pod
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Name used in CLI flags and reports.
    const NAME: &'static str;

    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable in scalar type")
    }

    #[inline]
    fn from_usize_lossy(v: usize) -> Self {
        Self::from_usize(v).expect("count representable in scalar type")
    }

    #[inline]
    fn widen(self) -> f64 {
        self.to_f64().expect("float widens to f64")
    }
}

mod private {
    pub trait Sealed {}
    impl Sealed for f32 {}
    impl Sealed for f64 {}
}

impl Real for f32 {
    const NAME: &'static str = "f32";
}

impl Real for f64 {
    const NAME: &'static str = "f64";
}

/// Position / displacement in three dimensions.
pub type Vec3<T> = [T; 3];

#[inline]
pub(crate) fn dist2<T: Real>(a: &Vec3<T>, b: &Vec3<T>) -> T {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}
