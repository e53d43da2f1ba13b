import { defineConfig } from 'vitest/config'

export default defineConfig({
  test: {
    include: ['test/**/*.test.ts'],
    testTimeout: 300_000, // a vgg16 forward pass on the JS CPU backend is slow
    hookTimeout: 300_000,
  },
})
