#pragma once

// Plain-text model checkpoints. Values are written in shortest round-trip
// form, so save followed by load reproduces every parameter bit for bit.
//
//   polyrnn-checkpoint 1
//   cell leaky
//   rate 2
//   dims <hidden> <input> <classes>
//   meta <key> <value>          (zero or more)
//   tensor <name> <rows> <cols>
//   <rows lines of cols values>
//   ...
//   end

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>

#include "polyrnn/training.hpp"

namespace polyrnn {

struct Checkpoint {
  Model model;
  std::map<std::string, std::string> meta;
};

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);

// Throws FormatError (with the 1-based line) on any schema violation.
Checkpoint read_checkpoint(std::istream& in);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace polyrnn
