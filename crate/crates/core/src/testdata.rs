//! Small hand-checkable fixture shared by the test suites.

use crate::model::{AttributeSchema, RatingsMatrix, UserProfiles};

/// Six users, five items, whole-star ratings out of 5, two sensitive
/// attributes (Gender in {A, B}, Age in {]0,40], ]40,inf[}).
pub fn example1() -> (RatingsMatrix, AttributeSchema, UserProfiles) {
    let stars: [[f64; 5]; 6] = [
        [5.0, 4.0, 5.0, 2.0, 3.0],
        [5.0, 5.0, 5.0, 3.0, 3.0],
        [5.0, 5.0, 5.0, 3.0, 3.0],
        [4.0, 5.0, 5.0, 2.0, 3.0],
        [2.0, 4.0, 3.0, 5.0, 1.0],
        [3.0, 4.0, 3.0, 4.0, 2.0],
    ];
    let mut entries = Vec::new();
    for (u, row) in stars.iter().enumerate() {
        for (i, &raw) in row.iter().enumerate() {
            entries.push((format!("u{}", u + 1), format!("i{}", i + 1), raw));
        }
    }
    let matrix = RatingsMatrix::from_raw_entries(entries, 5.0).unwrap();
    let schema = AttributeSchema::new(vec![
        ("Gender".into(), vec!["A".into(), "B".into()]),
        ("Age".into(), vec!["]0,40]".into(), "]40,inf[".into()]),
    ])
    .unwrap();
    let mut profiles = UserProfiles::new();
    for (user, gender, age) in [
        ("u1", 0u16, 0u16),
        ("u2", 0, 0),
        ("u3", 0, 1),
        ("u4", 0, 1),
        ("u5", 1, 0),
        ("u6", 1, 0),
    ] {
        profiles.insert(user, vec![Some(gender), Some(age)]);
    }
    (matrix, schema, profiles)
}
