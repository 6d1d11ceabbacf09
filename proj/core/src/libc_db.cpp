#include "basics/libc_db.hpp"

#include "json.hpp"

#include "basics/bundled.hpp"
#include "basics/error.hpp"
#include "basics/instruction.hpp"

namespace basics {

namespace {

const std::pair<WriteRule, const char*> kRules[] = {
    {WriteRule::None, "none"},       {WriteRule::StrCpy, "strcpy"},     {WriteRule::StrNCpy, "strncpy"},
    {WriteRule::StrCat, "strcat"},   {WriteRule::StrNCat, "strncat"},   {WriteRule::Sprintf, "sprintf"},
    {WriteRule::Snprintf, "snprintf"}, {WriteRule::Gets, "gets"},       {WriteRule::Fgets, "fgets"},
    {WriteRule::Scanf, "scanf"},     {WriteRule::MemSet, "memset"},     {WriteRule::MemCpy, "memcpy"},
};

std::optional<ArgRole> parse_role(std::string_view s) {
  if (s == "dest") return ArgRole::DestBuffer;
  if (s == "src") return ArgRole::SrcBuffer;
  if (s == "format") return ArgRole::Format;
  if (s == "size") return ArgRole::Size;
  if (s == "value") return ArgRole::Value;
  if (s == "stream") return ArgRole::Stream;
  return std::nullopt;
}

}  // namespace

const char* to_string(WriteRule rule) {
  for (auto [r, name] : kRules)
    if (r == rule) return name;
  return "none";
}

std::optional<WriteRule> parse_write_rule(std::string_view s) {
  for (auto [r, name] : kRules)
    if (s == name) return r;
  return std::nullopt;
}

const char* to_string(ArgRole role) {
  switch (role) {
    case ArgRole::DestBuffer: return "dest";
    case ArgRole::SrcBuffer: return "src";
    case ArgRole::Format: return "format";
    case ArgRole::Size: return "size";
    case ArgRole::Value: return "value";
    case ArgRole::Stream: return "stream";
  }
  return "?";
}

std::optional<int> LibcSpec::role_position(ArgRole role) const {
  for (std::size_t i = 0; i < roles.size(); ++i)
    if (roles[i] == role) return static_cast<int>(i);
  return std::nullopt;
}

LibcDatabase LibcDatabase::from_json(std::string_view text) {
  LibcDatabase db;
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidConfig, std::string("libc database: ") + e.what());
  }
  if (!doc.contains("functions") || !doc["functions"].is_array())
    throw Error(ErrorKind::InvalidConfig, "libc database: missing 'functions' array");
  for (const auto& entry : doc["functions"]) {
    LibcSpec spec;
    spec.name = entry.value("name", "");
    if (spec.name.empty()) throw Error(ErrorKind::InvalidConfig, "libc database: entry without name");
    spec.arity = entry.value("arity", 0);
    spec.variadic = entry.value("variadic", false);
    spec.input_source = entry.value("input_source", false);
    spec.noreturn = entry.value("noreturn", false);
    auto rule = parse_write_rule(entry.value("write_rule", "none"));
    if (!rule) throw Error(ErrorKind::InvalidConfig, "libc database: bad write_rule for " + spec.name);
    spec.rule = *rule;
    int dests = 0;
    for (const auto& r : entry.value("args", nlohmann::json::array())) {
      auto role = parse_role(r.get<std::string>());
      if (!role) throw Error(ErrorKind::InvalidConfig, "libc database: bad role for " + spec.name);
      if (*role == ArgRole::DestBuffer) ++dests;
      spec.roles.push_back(*role);
    }
    if (dests > 1) throw Error(ErrorKind::InvalidConfig, "libc database: two dest buffers for " + spec.name);
    for (const auto& alias : entry.value("aliases", nlohmann::json::array()))
      db.aliases_[alias.get<std::string>()] = spec.name;
    db.specs_[spec.name] = std::move(spec);
  }
  return db;
}

const LibcDatabase& LibcDatabase::bundled() {
  static const LibcDatabase db = from_json(bundled::libc_json());
  return db;
}

void LibcDatabase::merge(const LibcDatabase& other) {
  for (const auto& [name, spec] : other.specs_) specs_[name] = spec;
  for (const auto& [alias, name] : other.aliases_) aliases_[alias] = name;
}

const LibcSpec* LibcDatabase::find(std::string_view name) const {
  std::string key = strip_symbol_decoration(name);
  if (auto a = aliases_.find(key); a != aliases_.end()) key = a->second;
  auto it = specs_.find(key);
  return it == specs_.end() ? nullptr : &it->second;
}

const LibcSpec& LibcDatabase::lookup(std::string_view name) const {
  if (const LibcSpec* s = find(name)) return *s;
  throw Error(ErrorKind::UnknownLibc, "no database entry for '" + std::string(name) + "'");
}

std::vector<std::string> LibcDatabase::names() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : specs_) out.push_back(name);
  return out;
}

const LibcSpec& lookup_libc(std::string_view name) {
  static const LibcDatabase db = LibcDatabase::bundled();
  return db.lookup(name);
}

}  // namespace basics
