//! Holds the `acceptance` test target, which runs after every other suite in
//! the workspace. The library itself is empty.
