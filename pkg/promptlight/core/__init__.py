# Core domain package
