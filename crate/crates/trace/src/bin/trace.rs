fn main() {
    println!("trace CLI under construction");
}
