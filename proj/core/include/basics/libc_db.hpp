#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace basics {

enum class ArgRole { DestBuffer, SrcBuffer, Format, Size, Value, Stream };

/// How many bytes a call writes through its destination argument.
enum class WriteRule {
  None,
  StrCpy,    // strlen(src) + 1
  StrNCpy,   // n
  StrCat,    // strlen(src) + 1 past the current terminator
  StrNCat,   // min(strlen(src), n) + 1 past the current terminator
  Sprintf,   // formatted length + 1
  Snprintf,  // min(formatted length + 1, n)
  Gets,      // line length + 1, unbounded
  Fgets,     // at most n
  Scanf,     // token length + 1 per %s conversion
  MemSet,    // n
  MemCpy,    // n
};

const char* to_string(WriteRule rule);
std::optional<WriteRule> parse_write_rule(std::string_view s);
const char* to_string(ArgRole role);

struct LibcSpec {
  std::string name;
  int arity = 0;
  bool variadic = false;
  std::vector<ArgRole> roles;
  bool input_source = false;  // reads stdin
  WriteRule rule = WriteRule::None;
  bool noreturn = false;

  /// Argument position (0 = rdi) of the role, if present.
  std::optional<int> role_position(ArgRole role) const;
};

class LibcDatabase {
 public:
  /// Bundled database, shared for the life of the process.
  static const LibcDatabase& bundled();
  /// Parses the JSON database format: {"functions": [{"name", "arity", "args",
  /// "input_source", "write_rule", "noreturn", "variadic", "aliases"}]}.
  static LibcDatabase from_json(std::string_view text);

  /// Adds or replaces entries from another database.
  void merge(const LibcDatabase& other);

  /// Throws Error(UnknownLibc) when absent. Accepts decorated names
  /// (`strcpy@plt`) and aliases (`__isoc99_scanf`).
  const LibcSpec& lookup(std::string_view name) const;
  const LibcSpec* find(std::string_view name) const;
  std::size_t size() const { return specs_.size(); }
  std::vector<std::string> names() const;

 private:
  std::map<std::string, LibcSpec> specs_;
  std::map<std::string, std::string> aliases_;
};

/// Free-function form of LibcDatabase::bundled().lookup(name).
const LibcSpec& lookup_libc(std::string_view name);

}  // namespace basics
